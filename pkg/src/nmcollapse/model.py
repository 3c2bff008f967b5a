"""Physical parameters, noise correlation kernels and the kernel-derived drives.

Everything downstream (noise sampling, the boundary-value solvers, the
propagator) takes its constants from :class:`ModelParams` and its memory
structure from a :class:`CorrelationKernel`.

Memory integrals are composite trapezoidal sums on a uniform
:class:`TimeGrid`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.signal import lfilter

HBAR_SI = 1.054571817e-34
KB_SI = 1.380649e-23


@dataclass(frozen=True)
class ModelParams:
    """Constants of the dissipative, non-Markovian collapse dynamics.

    Parameters
    ----------
    m : float
        Particle mass.
    hbar : float
        Reduced Planck constant.
    lam : float
        Collapse coupling λ (length⁻² time⁻¹).
    mu : float
        Dissipation strength μ (length²).
    omega : float
        Oscillator frequency; 0 for a free particle.
    gamma : float
        Inverse correlation time of the exponential kernel.
    kB : float
        Boltzmann constant, only used for :attr:`temperature`.
    unit_mode : str
        ``"dimensionless"`` or ``"si"``; informational, the solvers are
        unit-agnostic.
    """

    m: float = 1.0
    hbar: float = 1.0
    lam: float = 0.0
    mu: float = 0.0
    omega: float = 0.0
    gamma: float = 1.0
    kB: float = 1.0
    unit_mode: str = "dimensionless"

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.omega < 0:
            raise ValueError(f"omega must be non-negative, got {self.omega}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.unit_mode not in ("dimensionless", "si"):
            raise ValueError(f"unknown unit_mode {self.unit_mode!r}")

    @property
    def Omega2(self) -> float:
        """Ω² = ω² − λ²μ²."""
        return self.omega**2 - (self.lam * self.mu) ** 2

    @property
    def k(self) -> complex:
        """k = i m / (2 ħ)."""
        return 1j * self.m / (2.0 * self.hbar)

    @property
    def temperature(self) -> float:
        """Noise temperature ħ² / (4 m k_B μ); infinite without dissipation."""
        if self.mu == 0:
            return float("inf")
        return self.hbar**2 / (4.0 * self.m * self.kB * self.mu)

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class ExponentialKernel:
    """D(t, s) = (γ/2) exp(−γ |t − s|)."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __call__(self, t, s):
        return 0.5 * self.gamma * np.exp(-self.gamma * np.abs(np.subtract(t, s)))


@dataclass(frozen=True)
class WhiteLimit:
    """Tag for the delta-correlated limit D(t, s) → δ(t − s)."""

    def __call__(self, t, s):
        raise ValueError("pointwise evaluation undefined for delta kernel")


CorrelationKernel = Union[ExponentialKernel, WhiteLimit]


def kernel_for(params: ModelParams) -> ExponentialKernel:
    return ExponentialKernel(params.gamma)


def kernel_eval(kernel: CorrelationKernel, t: float, s: float) -> float:
    """Evaluate the correlation function at (t, s)."""
    if isinstance(kernel, WhiteLimit):
        raise ValueError("pointwise evaluation undefined for delta kernel")
    if t < 0 or s < 0:
        raise ValueError("kernel arguments must be non-negative times")
    return float(kernel(t, s))


def require_exponential(kernel: CorrelationKernel) -> ExponentialKernel:
    if not isinstance(kernel, ExponentialKernel):
        raise ValueError("pointwise evaluation undefined for delta kernel")
    return kernel


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid {0, Δt, ..., t_end}."""

    t_end: float
    n_steps: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        nodes = np.linspace(0.0, self.t_end, int(self.n_steps) + 1)
        nodes[0], nodes[-1] = 0.0, self.t_end
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def __len__(self) -> int:
        return self.n_steps + 1

    def prefix(self, n: int) -> "TimeGrid":
        """The grid [0, t_n] made of the first n steps."""
        return TimeGrid(float(self.nodes[n]), n)

    def index_of(self, s: float) -> int:
        """Index of the node equal to ``s`` (to rounding), else ValueError."""
        j = int(round(s / self.dt))
        if j < 0 or j > self.n_steps or abs(self.nodes[j] - s) > 1e-9 * max(self.dt, abs(s)):
            raise ValueError(f"time {s} is not a grid node")
        return j


def trapezoid_weights(n_points: int, dt: float) -> np.ndarray:
    w = np.full(n_points, dt)
    if n_points == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * dt
    return w


def trapezoid(values, dt: float):
    """Composite trapezoid along the last axis."""
    values = np.asarray(values)
    if values.shape[-1] < 2:
        return np.zeros(values.shape[:-1], dtype=values.dtype)
    return dt * (values[..., 1:-1].sum(axis=-1) + 0.5 * (values[..., 0] + values[..., -1]))


def decayed_cumulative(values, rate: float, dt: float):
    """Trapezoid sums T_j = ∫_0^{s_j} e^{−rate (s_j − r)} values(r) dr, all j.

    The recursion reproduces the composite trapezoid rule exactly and runs in
    O(n) along the last axis.
    """
    values = np.asarray(values)
    rho = np.exp(-rate * dt)
    x = np.zeros(values.shape, dtype=np.result_type(values, float))
    x[..., 1:] = 0.5 * dt * (rho * values[..., :-1] + values[..., 1:])
    return lfilter([1.0], [1.0, -rho], x, axis=-1)


def memory_integrals(noise_values, gamma: float, dt: float):
    """∫_0^{s_j} D(r, s_j) w_r dr for every node j (exponential kernel)."""
    return 0.5 * gamma * decayed_cumulative(noise_values, gamma, dt)


def a_drive_series(params: ModelParams, kernel: CorrelationKernel, noise) -> np.ndarray:
    """A_s at every node of the noise grid."""
    kern = require_exponential(kernel)
    w = np.asarray(noise.values, dtype=float)
    lam, mu, m, hbar = params.lam, params.mu, params.m, params.hbar
    if lam == 0:
        return np.zeros(w.shape, dtype=complex)
    sl = np.sqrt(lam)
    mem = memory_integrals(w, kern.gamma, noise.grid.dt)
    return 1j * hbar * sl * w + m * lam * sl * mu**2 * w + 2 * m * lam * sl * mu**2 * mem


def a_drive(params: ModelParams, kernel: CorrelationKernel, noise, s: float) -> complex:
    """A_s = iħ√λ w_s + mλ^{3/2}μ² w_s + 2mλ^{3/2}μ² ∫_0^s D(r,s) w_r dr."""
    require_exponential(kernel)
    j = noise.grid.index_of(s)
    w = np.asarray(noise.values[: j + 1], dtype=float)
    lam, mu, m, hbar = params.lam, params.mu, params.m, params.hbar
    sl = np.sqrt(lam)
    r = noise.grid.nodes[: j + 1]
    mem = trapezoid(kernel(r, r[-1]) * w, noise.grid.dt)
    return complex(1j * hbar * sl * w[-1] + m * lam * sl * mu**2 * (w[-1] + 2 * mem))


def b_coefficients(params: ModelParams) -> tuple[complex, float]:
    """(2mλ²μ² + 2iħλ, 4mλ²μ²): the two prefactors of B(r, s)."""
    lm2 = (params.lam * params.mu) ** 2
    return 2 * params.m * lm2 + 2j * params.hbar * params.lam, 4 * params.m * lm2


def b_kernel(params: ModelParams, kernel: CorrelationKernel, r: float, s: float, grid: TimeGrid) -> complex:
    """B(r, s) for on-grid 0 ≤ r ≤ s, inner integral by trapezoid."""
    kern = require_exponential(kernel)
    if r > s:
        raise ValueError(f"b_kernel needs r <= s, got r={r}, s={s}")
    i = grid.index_of(r)
    grid.index_of(s)
    c1, c2 = b_coefficients(params)
    rp = grid.nodes[: i + 1]
    inner = trapezoid(kern(r, rp) * kern(s, rp), grid.dt)
    return complex(c1 * kern(r, s) + c2 * inner)


def diagonal_inner(kernel: ExponentialKernel, grid: TimeGrid) -> np.ndarray:
    """J(r, r) = ∫_0^r D(r, r')² dr' by trapezoid at every node r.

    For r ≤ s the exponential kernel gives J(r, s) = J(r, r) e^{−γ(s−r)}.
    """
    g = kernel.gamma
    ones = np.full(len(grid), 0.25 * g * g)
    return decayed_cumulative(ones, 2 * g, grid.dt)
