"""Green's-function coefficients, Gaussian-state evolution and ensembles.

The propagator is

    G(x, t; x₀, 0) ∝ exp[−A x₀² − Ã x² + B x₀x + C x₀ + D x + E],

so a Gaussian exp[−α₀x² + β₀x + γ₀] maps to

    α_t = Ã − B² / (4(α₀ + A))
    β_t = D + B (C + β₀) / (2(α₀ + A))
    γ_t = γ₀ + E + (C + β₀)² / (4(α₀ + A))

(plus a norm factor that is dropped: states are renormalised). Only C, D, E
depend on the noise, so α_t, and with it the spread, is deterministic.

Moments of |φ|² = exp[−2Re α x² + 2Re β x + 2Re γ]:

    ⟨x⟩ = Re β / (2 Re α),  σ_x = 1 / (2 √Re α),  σ_p = ħ |α| / √Re α.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .analytic import (
    DEFAULT_BC,
    MIN_H_STEPS,
    MIN_LOCAL_STEPS,
    BoundaryChoice,
    LocalSystem,
    Solution,
    SolutionTriple,
    h_sources,
    solve_f,
    solve_g,
    solve_local_f,
    solve_local_g,
)
from .model import CorrelationKernel, ExponentialKernel, ModelParams, TimeGrid, a_drive_series, trapezoid
from .noise import NoiseTrajectory, integral_against, sample

VARIANTS = ("white", "white_dissipative", "nonwhite", "nonwhite_dissipative")


class CausticError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GreenCoefficients:
    A_t: complex
    Atilde_t: complex
    B_t: complex
    C_t: complex
    D_t: complex
    E_t: complex
    t: float


@dataclass(frozen=True)
class GaussianState:
    """exp[−α x² + β x + γ_c]."""

    alpha: complex
    beta: complex = 0.0
    gamma_c: complex = 0.0

    @classmethod
    def from_spread(cls, sigma0: float, x0: float = 0.0, p0: float = 0.0, hbar: float = 1.0) -> "GaussianState":
        alpha = 1.0 / (4.0 * sigma0**2)
        return cls(alpha, 2 * alpha * x0 + 1j * p0 / hbar).normalized()

    def normalized(self) -> "GaussianState":
        """Fix Re γ_c so that ∫|φ|² = 1; the phase is untouched."""
        ar = self.alpha.real if isinstance(self.alpha, complex) else float(self.alpha)
        if ar <= 0:
            raise ValueError("non-normalizable state")
        br = complex(self.beta).real
        re_gamma = -0.25 * math.log(math.pi / (2 * ar)) - br * br / (4 * ar)
        return GaussianState(complex(self.alpha), complex(self.beta), complex(re_gamma, complex(self.gamma_c).imag))

    @property
    def x_mean(self) -> float:
        return complex(self.beta).real / (2 * complex(self.alpha).real)

    def __call__(self, x):
        return np.exp(-self.alpha * np.asarray(x) ** 2 + self.beta * np.asarray(x) + self.gamma_c)


def spread(state: GaussianState) -> float:
    """σ = 1 / (2 √Re α)."""
    ar = complex(state.alpha).real
    if ar <= 0:
        raise ValueError("non-normalizable state")
    return 1.0 / (2.0 * math.sqrt(ar))


def momentum_spread(state: GaussianState, hbar: float = 1.0) -> float:
    """σ_p = ħ |α| / √Re α."""
    a = complex(state.alpha)
    if a.real <= 0:
        raise ValueError("non-normalizable state")
    return hbar * abs(a) / math.sqrt(a.real)


def spreads(alpha) -> np.ndarray:
    alpha = np.asarray(alpha)
    if np.any(alpha.real <= 0):
        raise ValueError("non-normalizable state")
    return 1.0 / (2.0 * np.sqrt(alpha.real))


def deterministic_coefficients(params: ModelParams, f: Solution, g: Solution) -> tuple[complex, complex, complex]:
    """(A_t, Ã_t, B_t) from f, g; never touches the noise."""
    k, lm = params.k, params.lam * params.mu
    a = k * (f.d1_start - lm - 2 * lm * f.kernel_moment)
    atilde = -k * (g.d1_end - lm)
    b = k * (f.d1_end - g.d1_start + 2 * lm * g.kernel_moment)
    return complex(a), complex(atilde), complex(b)


def stochastic_coefficients(
    params: ModelParams, f: Solution, g: Solution, h: Solution, noise: NoiseTrajectory, a_s: np.ndarray | None = None
) -> tuple[complex, complex, complex]:
    """(C_t, D_t, E_t); every ẇ-integral is taken by parts."""
    if len(noise.values) != len(f.values) or len(h.values) != len(f.values):
        raise ValueError("solutions and noise live on different grids")
    k, lam, mu, m = params.k, params.lam, params.mu, params.m
    sl = math.sqrt(lam)
    dt = noise.grid.dt
    w = noise.values
    if a_s is None:
        a_s = a_drive_series(params, ExponentialKernel(params.gamma), noise)

    def wdot(e: Solution) -> complex:
        return integral_against(noise, e.values, "against_derivative", e.d1)

    def drive(e: Solution) -> complex:
        return complex(trapezoid(a_s * e.values, dt)) / m

    c = -k * (h.d1_start + 2 * sl * mu * w[0] + sl * mu * wdot(f) + drive(f) - 2 * lam * mu * h.kernel_moment)
    d = k * (h.d1_end + 2 * sl * mu * w[-1] - sl * mu * wdot(g) - drive(g))
    e = -k * (sl * mu * wdot(h) + drive(h) - lam * mu * mu * trapezoid(w * w, dt))
    return complex(c), complex(d), complex(e)


def assemble_coefficients(
    params: ModelParams, kernel: CorrelationKernel, triple: SolutionTriple, noise: NoiseTrajectory
) -> GreenCoefficients:
    """All six propagator coefficients at t = triple.grid.t_end."""
    if not isinstance(kernel, ExponentialKernel):
        raise ValueError("coefficients need the exponential kernel; use riccati_oracle for the white limit")
    if triple.h is None:
        raise ValueError("triple has no h solution")
    if noise.grid.n_steps != triple.grid.n_steps or noise.grid.t_end != triple.grid.t_end:
        raise ValueError("grid mismatch between solutions and noise")
    a, atilde, b = deterministic_coefficients(params, triple.f, triple.g)
    c, d, e = stochastic_coefficients(params, triple.f, triple.g, triple.h, noise)
    return GreenCoefficients(a, atilde, b, c, d, e, triple.grid.t_end)


def evolve_gaussian(state0: GaussianState, coeffs: GreenCoefficients) -> GaussianState:
    """Push a Gaussian through the propagator (unnormalised)."""
    den = complex(state0.alpha) + coeffs.A_t
    if abs(den) < 1e-30:
        raise CausticError("caustic/degenerate propagation")
    cb = coeffs.C_t + state0.beta
    alpha = coeffs.Atilde_t - coeffs.B_t**2 / (4 * den)
    beta = coeffs.D_t + coeffs.B_t * cb / (2 * den)
    gamma_c = state0.gamma_c + coeffs.E_t + cb * cb / (4 * den)
    return GaussianState(complex(alpha), complex(beta), complex(gamma_c))


# -- white-noise limits ---------------------------------------------------------


def riccati_rhs(params: ModelParams, dissipative: bool):
    """dα/dt = λ − 4λμα − (2iħ/m) α² + i m ω² / (2ħ)  (μ → 0 when not dissipative),
    dβ/dt = −(2iħ/m) α β − 2λμ β  for the noise-free mean."""
    lam, m, hbar = params.lam, params.m, params.hbar
    mu = params.mu if dissipative else 0.0
    c2 = 2j * hbar / m
    pot = 1j * m * params.omega**2 / (2 * hbar)

    def rhs(_t, y):
        a, b = y
        return [lam - 4 * lam * mu * a - c2 * a * a + pot, -c2 * a * b - 2 * lam * mu * b]

    return rhs


def riccati_fixed_point(params: ModelParams, dissipative: bool = False) -> complex:
    """Stable root (Re α > 0) of (2iħ/m) α² + 4λμα − λ − i m ω²/(2ħ) = 0."""
    mu = params.mu if dissipative else 0.0
    c2 = 2j * params.hbar / params.m
    roots = np.roots([c2, 4 * params.lam * mu, -params.lam - 1j * params.m * params.omega**2 / (2 * params.hbar)])
    return complex(roots[np.argmax(roots.real)])


def riccati_alpha(
    params: ModelParams, variant: str, grid: TimeGrid, alpha0: complex, beta0: complex = 0.0, rtol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """(α_t, β_t) of the white-noise model with the noise switched off in β."""
    if variant not in ("white", "white_dissipative"):
        raise ValueError(f"riccati oracle covers the white variants only, got {variant!r}")
    rhs = riccati_rhs(params, variant == "white_dissipative")
    y0 = np.array([alpha0, beta0], dtype=complex)
    scale = max(abs(complex(alpha0)), abs(complex(beta0)), 1e-300)
    sol = solve_ivp(
        rhs, (0.0, grid.t_end), y0, method="RK45", t_eval=grid.nodes, rtol=rtol, atol=1e-20 * scale
    )
    if not sol.success:
        raise RuntimeError(f"Riccati integration failed: {sol.message}")
    return sol.y[0], sol.y[1]


def riccati_oracle(params: ModelParams, variant: str, grid: TimeGrid, alpha0: complex) -> np.ndarray:
    """σ(t) of the white (or white dissipative) model by adaptive RK45."""
    alpha, _ = riccati_alpha(params, variant, grid, alpha0)
    return spreads(alpha)


# -- time series ------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesResult:
    """Per-node propagation from t = 0 for one set of parameters.

    Stochastic arrays, and α (computed separately per trajectory), have
    shape (n_traj, n_nodes).
    """

    t: np.ndarray
    A: np.ndarray
    Atilde: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma_c: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return spreads(self.alpha)

    @property
    def x_mean(self) -> np.ndarray:
        return self.beta.real / (2 * self.alpha.real)


def solve_fg(params: ModelParams, grid: TimeGrid, bc: BoundaryChoice = DEFAULT_BC, basis: str = "auto"):
    """f and g on ``grid``: closed form for a free particle, banded otherwise."""
    if params.omega == 0:
        return solve_f(params, grid, bc, basis), solve_g(params, grid, bc, basis)
    system = LocalSystem(params, grid)
    return solve_local_f(params, grid, bc, system), solve_local_g(params, grid, bc, system)


def _interpolated(noise: NoiseTrajectory, n_fine: int) -> NoiseTrajectory:
    fine = TimeGrid(noise.grid.t_end, n_fine)
    vals = np.interp(fine.nodes, noise.grid.nodes, noise.values)
    return NoiseTrajectory(fine, vals, noise.seed, {**noise.meta, "interpolated": True})


def evolve_series(
    params: ModelParams,
    grid: TimeGrid,
    state0: GaussianState,
    noises: Sequence[NoiseTrajectory] = (),
    bc: BoundaryChoice = DEFAULT_BC,
    basis: str = "auto",
) -> SeriesResult:
    """Propagate ``state0`` to every node of ``grid`` through the exact propagator.

    For each node t_n, f, g, h are solved on [0, t_n]. h needs at least
    ``MIN_H_STEPS`` steps (``MIN_LOCAL_STEPS`` when ω > 0); for earlier
    nodes the path is linearly interpolated onto a finer grid. Without
    noises, C = D = E = 0.
    """
    n_nodes = len(grid)
    n_traj = max(1, len(noises))
    for nz in noises:
        if nz.grid.n_steps != grid.n_steps or nz.grid.t_end != grid.t_end:
            raise ValueError("noise grid does not match the time grid")
    out = {k: np.zeros(n_nodes, dtype=complex) for k in ("A", "Atilde", "B")}
    sto = {k: np.zeros((n_traj, n_nodes), dtype=complex) for k in ("C", "D", "E", "beta", "gamma_c")}
    alpha = np.zeros((n_traj, n_nodes), dtype=complex)
    alpha[:, 0] = state0.alpha
    sto["beta"][:, 0] = state0.beta
    sto["gamma_c"][:, 0] = state0.gamma_c
    for n in range(1, n_nodes):
        if params.omega != 0:
            steps = max(n, MIN_LOCAL_STEPS)
        else:
            steps = max(n, MIN_H_STEPS) if noises else n
        sub = TimeGrid(float(grid.nodes[n]), steps)
        f, g = solve_fg(params, sub, bc, basis)
        a, atilde, b = deterministic_coefficients(params, f, g)
        out["A"][n], out["Atilde"][n], out["B"][n] = a, atilde, b
        if noises:
            system = LocalSystem(params, sub)
            for i, nz in enumerate(noises):
                local = nz.restrict(n)
                if steps != n:
                    local = _interpolated(local, steps)
                rhs, coeff = h_sources(params, local)
                h = system.solve(rhs, bc.h, coeff, local.values)
                sto["C"][i, n], sto["D"][i, n], sto["E"][i, n] = stochastic_coefficients(params, f, g, h, local, -2 * rhs)
        for i in range(n_traj):
            coeffs = GreenCoefficients(a, atilde, b, sto["C"][i, n], sto["D"][i, n], sto["E"][i, n], sub.t_end)
            st = evolve_gaussian(state0, coeffs)
            alpha[i, n] = st.alpha
            sto["beta"][i, n] = st.beta
            sto["gamma_c"][i, n] = st.gamma_c
    return SeriesResult(grid.nodes.copy(), out["A"], out["Atilde"], out["B"], sto["C"], sto["D"], sto["E"], alpha, sto["beta"], sto["gamma_c"])


@dataclass(frozen=True)
class EnsembleMoments:
    t: np.ndarray
    sigma: np.ndarray  # (n_traj, n_nodes), identical rows
    sigma_variance: np.ndarray
    x_mean: np.ndarray  # ensemble mean of ⟨x⟩
    x_variance: np.ndarray  # ensemble variance of ⟨x⟩
    seeds: tuple[int, ...]


def ensemble_moments(
    params: ModelParams,
    kernel: CorrelationKernel,
    grid: TimeGrid,
    n_traj: int,
    seed0: int,
    state0: GaussianState,
    w0_mode: str = "stationary",
    bc: BoundaryChoice = DEFAULT_BC,
) -> EnsembleMoments:
    """Monte Carlo statistics of ⟨x⟩ over seeds seed0 .. seed0 + n_traj − 1."""
    if n_traj < 2:
        raise ValueError("ensemble needs at least two trajectories")
    seeds = tuple(range(seed0, seed0 + n_traj))
    noises = [sample(kernel, grid, s, w0_mode) for s in seeds]
    res = evolve_series(params, grid, state0, noises, bc)
    sigma = res.sigma
    x = res.x_mean
    return EnsembleMoments(res.t, sigma, sigma.var(axis=0), x.mean(axis=0), x.var(axis=0, ddof=1), seeds)
