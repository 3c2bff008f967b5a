"""Closed-form and banded solvers for f, g, h with the exponential kernel.

With D(t,s) = (γ/2)e^{−γ|t−s|} the operator of :mod:`nmcollapse.ide` reads

    I[e](s) = (m/2) ë + c₀ e − K P(s) + Q e^{−γs} ∫_0^t e^{−γr} e(r) dr,
    P(s)    = ∫_0^t e^{−γ|r−s|} e(r) dr,

with c₀ = (m/2)(Ω² + 2λμγ), K = c₁γ/4 + c₂γ/16 + mλμγ²/2, Q = c₂γ/16 and
(c₁, c₂) the prefactors of B. Because (d²/ds² − γ²) P = −2γ e and the Q term
is annihilated by the same operator, any solution obeys the quartic ODE

    e'''' − (γ − λμ)² ë + (4λ²μ²γ² + 2iħλγ²/m) e = L[rhs]       (ω = 0)

and conversely a solution of the quartic solves the integral equation iff
the equation also holds at s = 0 and s = t. Those two end conditions,
together with the two end values, fix the four constants. Written out for f
they coincide with the published f̈(0), f̈(t) conditions once f(t) = 0.

f and g are built from exponentials of the characteristic roots with every
integral in closed form. h has a rough source (ẇ) and is solved on the grid
from the equivalent local system (e, P, ∫e^{−γr}e) which is banded apart
from one scalar unknown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .ide import COND_LIMIT, BoundarySpec, IllConditionedError, local_coefficient
from .model import (
    ExponentialKernel,
    ModelParams,
    TimeGrid,
    a_drive_series,
    b_coefficients,
    trapezoid_weights,
)
from .noise import NoiseTrajectory

DEGENERATE_RTOL = 1e-10
SMALL_ROOT = 1e-6
HYPERBOLIC_MAX = 2.0
MIN_H_STEPS = 16
# below this the banded system is too coarse for the oscillator coefficients
MIN_LOCAL_STEPS = 64


@dataclass(frozen=True)
class BoundaryChoice:
    """End values for f, g, h; the end second-derivative conditions always
    come from the equation itself."""

    f: tuple[complex, complex] = (1.0, 0.0)
    g: tuple[complex, complex] = (0.0, 1.0)
    h: tuple[complex, complex] = (0.0, 0.0)

    @classmethod
    def literal(cls) -> "BoundaryChoice":
        """f(0) = f(t) = 1 as printed; fails the free-particle limit."""
        return cls(f=(1.0, 1.0))

    def spec(self, which: str) -> BoundarySpec:
        left, right = getattr(self, which)
        return BoundarySpec(left, right)


DEFAULT_BC = BoundaryChoice()


@dataclass(frozen=True)
class CharacteristicRoots:
    upsilon1: complex
    upsilon2: complex
    zeta: complex
    degenerate: bool

    def quartic_residuals(self, params: ModelParams) -> tuple[float, float]:
        """Relative residuals of both roots in the characteristic quartic."""
        p2, q0 = quartic_coefficients(params)
        out = []
        for u in (self.upsilon1, self.upsilon2):
            u2 = u * u
            val = u2 * u2 - p2 * u2 + q0
            scale = max(abs(u2 * u2), abs(p2 * u2), abs(q0), 1e-300)
            out.append(abs(val) / scale)
        return tuple(out)


def quartic_coefficients(params: ModelParams) -> tuple[float, complex]:
    """(p, q) of υ⁴ − p υ² + q = 0 for the free particle."""
    g, lm = params.gamma, params.lam * params.mu
    p2 = (g - lm) ** 2
    q0 = 4 * lm * lm * g * g + 2j * params.hbar * params.lam * g * g / params.m
    return p2, q0


def characteristic_roots(params: ModelParams) -> CharacteristicRoots:
    """υ₁,₂ = √(((γ − λμ)² ± ζ)/2), ζ = √((γ−λμ)⁴ − 16λ²μ²γ² − 8iħλγ²/m).

    Principal branches throughout. The smaller υ² is taken from the product
    of the roots, which is the same number without the cancellation.
    """
    if params.omega != 0:
        raise ValueError("analytic path supports free particle only; use ide-solver")
    p2, q0 = quartic_coefficients(params)
    g, lm = params.gamma, params.lam * params.mu
    zeta = np.sqrt(complex(p2 * p2 - 16 * lm * lm * g * g - 8j * params.hbar * params.lam * g * g / params.m))
    big = 0.5 * (p2 + zeta)
    small = q0 / big if big != 0 else 0.5 * (p2 - zeta)
    u1, u2 = complex(np.sqrt(big)), complex(np.sqrt(small))
    scale = max(abs(u1), abs(u2))
    degenerate = scale > 0 and abs(u1 - u2) < DEGENERATE_RTOL * scale
    return CharacteristicRoots(u1, u2, complex(zeta), bool(degenerate))


# -- exponential sums ---------------------------------------------------------


def _series(z: complex, kind: int) -> complex:
    """∫_0^1 u e^{zu} du style kernels by Taylor series for |z| < 1."""
    total, term, n = 0.0j, 1.0 + 0.0j, 0
    while True:
        if kind == 0:
            add = term / (n + 1)
        elif kind == 1:
            add = term / (n + 2)
        else:
            add = term / ((n + 1) * (n + 2))
        total += add
        n += 1
        term = term * z / n
        if abs(add) < 1e-18 * abs(total) or n > 60:
            return total


def _phi(z: complex, kind: int) -> complex:
    """kind 0: ∫_0^1 e^{zu}du; 1: ∫_0^1 u e^{zu}du; 2: ∫_0^1 (1−u) e^{zu}du."""
    if abs(z) < 1.0:
        return _series(z, kind)
    ez = np.exp(z)
    if kind == 0:
        return (ez - 1.0) / z
    if kind == 1:
        return ((z - 1.0) * ez + 1.0) / (z * z)
    return (ez - 1.0 - z) / (z * z)


def _moment(c: complex, d: complex, p: int, t: float) -> complex:
    """∫_0^t r^p exp(c r + d) dr, factoring out the larger endpoint value."""
    if c.real <= 0:
        return np.exp(d) * t ** (p + 1) * _phi(c * t, p)
    # substitute r = t − u so the remaining exponential decays
    return np.exp(c * t + d) * t ** (p + 1) * _phi(-c * t, 0 if p == 0 else 2)


@dataclass(frozen=True)
class Term:
    """coef · s^power · exp(rate (s − anchor))."""

    coef: complex
    rate: complex
    anchor: float
    power: int = 0


class ExpSeries:
    """A finite sum of :class:`Term`."""

    def __init__(self, terms: Sequence[Term]):
        self.terms = tuple(terms)

    def __call__(self, s, deriv: int = 0):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape, dtype=complex)
        for tm in self.terms:
            ex = tm.coef * np.exp(tm.rate * (s - tm.anchor))
            a = tm.rate
            if tm.power == 0:
                out = out + a**deriv * ex
            elif deriv == 0:
                out = out + s * ex
            elif deriv == 1:
                out = out + (1.0 + a * s) * ex
            elif deriv == 2:
                out = out + (2.0 * a + a * a * s) * ex
            else:
                raise ValueError("derivatives above second order are not needed")
        return out

    def weighted_integral(self, rate: complex, anchor: float, t: float) -> complex:
        """∫_0^t exp(rate (r − anchor)) · self(r) dr in closed form."""
        total = 0.0j
        for tm in self.terms:
            c = tm.rate + rate
            d = -rate * anchor - tm.rate * tm.anchor
            total += tm.coef * _moment(complex(c), complex(d), tm.power, t)
        return total

    def __mul__(self, scalar) -> "ExpSeries":
        return ExpSeries([Term(scalar * tm.coef, tm.rate, tm.anchor, tm.power) for tm in self.terms])

    __rmul__ = __mul__

    def __add__(self, other: "ExpSeries") -> "ExpSeries":
        return ExpSeries(self.terms + other.terms)


def _root_pair(u: complex, t: float, basis: str, power: int = 0) -> list[ExpSeries]:
    if abs(u) * t < SMALL_ROOT:
        # υ → 0 limit of {cosh υs, sinh υs / υ}
        return [ExpSeries([Term(1.0, 0.0, 0.0, power)]), ExpSeries([Term(1.0, 0.0, 0.0, power + 1)])]
    use_anchored = basis == "anchored" or (basis == "auto" and abs(u) * t > HYPERBOLIC_MAX)
    if use_anchored:
        return [ExpSeries([Term(1.0, u, t, power)]), ExpSeries([Term(1.0, -u, 0.0, power)])]
    if basis not in ("auto", "hyperbolic"):
        raise ValueError(f"unknown basis {basis!r}")
    return [
        ExpSeries([Term(0.5, u, 0.0, power), Term(0.5, -u, 0.0, power)]),
        ExpSeries([Term(0.5 / u, u, 0.0, power), Term(-0.5 / u, -u, 0.0, power)]),
    ]


def basis_functions(roots: CharacteristicRoots, t: float, basis: str = "auto") -> list[ExpSeries]:
    """Four independent solutions of the homogeneous quartic on [0, t]."""
    first = _root_pair(roots.upsilon1, t, basis)
    if roots.degenerate:
        return first + _root_pair(roots.upsilon1, t, basis, power=1)
    return first + _root_pair(roots.upsilon2, t, basis)


# -- solutions -----------------------------------------------------------------


@dataclass(frozen=True)
class Solution:
    """A solution sampled on a grid with its derivatives.

    ``kernel_moment`` is ∫_0^t D(0,s) e(s) ds; ``series`` is set for closed
    forms and allows evaluation off the grid.
    """

    grid: TimeGrid
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d1_start: complex
    d1_end: complex
    kernel_moment: complex
    series: ExpSeries | None = None
    condition: float = float("nan")


@dataclass(frozen=True)
class SolutionTriple:
    f: Solution
    g: Solution
    h: Solution | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.f.grid


def operator_constants(params: ModelParams) -> tuple[float, complex, float]:
    """(c₀, K, Q) of the exponential-kernel operator."""
    g = params.gamma
    c1, c2 = b_coefficients(params)
    lm = params.m * params.lam * params.mu
    kconst = c1 * g / 4 + c2 * g / 16 + lm * g * g / 2
    return local_coefficient(params, ExponentialKernel(g)), kconst, c2 * g / 16


def _end_operator(params: ModelParams, phi: ExpSeries, t: float) -> tuple[complex, complex]:
    """I[φ](0) and I[φ](t) in closed form."""
    g = params.gamma
    c0, kconst, qconst = operator_constants(params)
    w_start = phi.weighted_integral(-g, 0.0, t)  # ∫ e^{−γr} φ
    w_end = phi.weighted_integral(g, t, t)  # ∫ e^{−γ(t−r)} φ
    half_m = 0.5 * params.m
    at0 = half_m * phi(0.0, 2) + c0 * phi(0.0) - kconst * w_start + qconst * w_start
    at_t = half_m * phi(t, 2) + c0 * phi(t) - kconst * w_end + qconst * np.exp(-g * t) * w_start
    return complex(at0), complex(at_t)


def _solve_closed_form(
    params: ModelParams,
    grid: TimeGrid,
    values: tuple[complex, complex],
    rhs_ends: tuple[complex, complex],
    basis: str,
) -> Solution:
    roots = characteristic_roots(params)
    t = grid.t_end
    funcs = basis_functions(roots, t, basis)
    mat = np.zeros((4, 4), dtype=complex)
    for j, phi in enumerate(funcs):
        mat[0, j] = phi(0.0)
        mat[1, j] = phi(t)
        mat[2, j], mat[3, j] = _end_operator(params, phi, t)
    rhs = np.array([values[0], values[1], rhs_ends[0], rhs_ends[1]], dtype=complex)
    scale = np.max(np.abs(mat), axis=1)
    scale[scale == 0] = 1.0
    mat, rhs = mat / scale[:, None], rhs / scale
    try:
        cond = float(np.linalg.cond(mat))
    except np.linalg.LinAlgError:
        cond = float("inf")
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError("closed-form boundary system is singular", cond)
    coef = np.linalg.solve(mat, rhs)
    series = ExpSeries([])
    for c, phi in zip(coef, funcs):
        series = series + c * phi
    s = grid.nodes
    moment = 0.5 * params.gamma * series.weighted_integral(-params.gamma, 0.0, t)
    vals = series(s)
    # the boundary values hold exactly, not only to rounding
    vals[0], vals[-1] = values
    return Solution(
        grid,
        vals,
        series(s, 1),
        series(s, 2),
        complex(series(0.0, 1)),
        complex(series(t, 1)),
        complex(moment),
        series,
        cond,
    )


def solve_f(params: ModelParams, grid: TimeGrid, bc: BoundaryChoice = DEFAULT_BC, basis: str = "auto") -> Solution:
    """f on [0, t]: I[f] = mλμ D(0,s), default f(0) = 1, f(t) = 0."""
    if params.omega != 0:
        raise ValueError("analytic path supports free particle only; use ide-solver")
    g = params.gamma
    src = params.m * params.lam * params.mu * 0.5 * g
    return _solve_closed_form(params, grid, bc.f, (src, src * np.exp(-g * grid.t_end)), basis)


def solve_g(params: ModelParams, grid: TimeGrid, bc: BoundaryChoice = DEFAULT_BC, basis: str = "auto") -> Solution:
    """g on [0, t]: I[g] = 0, default g(0) = 0, g(t) = 1."""
    if params.omega != 0:
        raise ValueError("analytic path supports free particle only; use ide-solver")
    return _solve_closed_form(params, grid, bc.g, (0.0, 0.0), basis)


# -- banded local system ---------------------------------------------------------


class LocalSystem:
    """Grid discretisation of the exponential-kernel equation as a local system.

    Unknowns are e_j, P_j (j = 0..n) and q = ∫_0^t e^{−γr} e dr. P obeys
    P'' − γ²P = −2γe with P'(0) = γP(0), P'(t) = −γP(t), which makes it the
    exact memory integral; the e-equation is collocated at interior nodes and
    the ends carry the prescribed values. Valid for any ω. The factorisation
    is reused across right-hand sides (e.g. many noise paths).
    """

    def __init__(self, params: ModelParams, grid: TimeGrid):
        self.params, self.grid = params, grid
        n = grid.n_steps
        if n < 2:
            raise ValueError(f"banded system needs at least 2 steps, got {n}")
        self.n = n
        dt, g, m = grid.dt, params.gamma, params.m
        c0, kconst, qconst = operator_constants(params)
        self.consts = (c0, kconst, qconst)
        size = 2 * (n + 1) + 1
        iq = size - 1
        rows, cols, vals = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        s = grid.nodes
        hs = 2.0 * dt * dt / m
        put(0, 0, 1.0)
        put(n, n, 1.0)
        for j in range(1, n):
            put(j, j - 1, 1.0)
            put(j, j, -2.0 + hs * c0)
            put(j, j + 1, 1.0)
            put(j, n + 1 + j, -hs * kconst)
            put(j, iq, hs * qconst * np.exp(-g * s[j]))
        off = n + 1
        d2 = dt * dt
        for j in range(n + 1):
            r = off + j
            if j == 0:
                put(r, off, -2.0 - 2.0 * dt * g - d2 * g * g)
                put(r, off + 1, 2.0)
            elif j == n:
                put(r, off + n, -2.0 - 2.0 * dt * g - d2 * g * g)
                put(r, off + n - 1, 2.0)
            else:
                put(r, r - 1, 1.0)
                put(r, r, -2.0 - d2 * g * g)
                put(r, r + 1, 1.0)
            put(r, j, 2.0 * g * d2)
        weights = trapezoid_weights(n + 1, dt) * np.exp(-g * s)
        put(iq, iq, 1.0)
        for j in range(n + 1):
            put(iq, j, -weights[j])
        self.weights = weights
        self.size = size
        self.matrix = sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(size, size))
        self.lu = splu(self.matrix)

    def solve(
        self,
        rhs_smooth: np.ndarray,
        values: tuple[complex, complex],
        wdot_coeff: float = 0.0,
        noise_values: np.ndarray | None = None,
    ) -> Solution:
        """Solve for one right-hand side ``rhs_smooth + wdot_coeff · ẇ``."""
        n, dt, m, g = self.n, self.grid.dt, self.params.m, self.params.gamma
        c0, kconst, qconst = self.consts
        rhs_smooth = np.asarray(rhs_smooth, dtype=complex)
        if noise_values is None:
            noise_values = np.zeros(n + 1)
        w = np.asarray(noise_values, dtype=float)
        b = np.zeros(self.size, dtype=complex)
        src = rhs_smooth[1:n].copy()
        if wdot_coeff:
            src += wdot_coeff * (w[2:] - w[:-2]) / (2 * dt)
        b[1:n] = 2.0 * dt * dt / m * src
        b[0], b[n] = values
        x = self.lu.solve(b)
        e, p, q = x[: n + 1], x[n + 1 : 2 * n + 2], x[-1]
        s = self.grid.nodes
        smooth_dd = 2.0 / m * (rhs_smooth - c0 * e + kconst * p - qconst * np.exp(-g * s) * q)
        sw = 2.0 / m * wdot_coeff
        d1_start = (e[1] - e[0]) / dt - sw * (w[1] - w[0]) / 2 - dt * (smooth_dd[0] / 3 + smooth_dd[1] / 6)
        d1_end = (e[n] - e[n - 1]) / dt + sw * (w[n] - w[n - 1]) / 2 + dt * (smooth_dd[n - 1] / 6 + smooth_dd[n] / 3)
        d1 = np.empty(n + 1, dtype=complex)
        d1[1:-1] = (e[2:] - e[:-2]) / (2 * dt)
        d1[0], d1[-1] = d1_start, d1_end
        d2 = np.empty(n + 1, dtype=complex)
        d2[1:-1] = (e[2:] - 2 * e[1:-1] + e[:-2]) / (dt * dt)
        wdot_ends = np.gradient(w, dt, edge_order=2)[[0, -1]]
        d2[0] = smooth_dd[0] + sw * wdot_ends[0]
        d2[-1] = smooth_dd[-1] + sw * wdot_ends[1]
        return Solution(self.grid, e, d1, d2, complex(d1_start), complex(d1_end), complex(0.5 * g * q))


def solve_local_f(params: ModelParams, grid: TimeGrid, bc: BoundaryChoice = DEFAULT_BC, system: LocalSystem | None = None) -> Solution:
    """f from the banded system; used when ω > 0."""
    system = system or LocalSystem(params, grid)
    rhs = params.m * params.lam * params.mu * 0.5 * params.gamma * np.exp(-params.gamma * grid.nodes)
    return system.solve(rhs, bc.f)


def solve_local_g(params: ModelParams, grid: TimeGrid, bc: BoundaryChoice = DEFAULT_BC, system: LocalSystem | None = None) -> Solution:
    system = system or LocalSystem(params, grid)
    return system.solve(np.zeros(len(grid)), bc.g)


def h_sources(params: ModelParams, noise: NoiseTrajectory) -> tuple[np.ndarray, float]:
    """(−A_s/2 on the grid, coefficient m√λμ/2 of ẇ)."""
    rhs = -0.5 * a_drive_series(params, ExponentialKernel(params.gamma), noise)
    return rhs, 0.5 * params.m * math.sqrt(params.lam) * params.mu


def solve_h(
    params: ModelParams,
    grid: TimeGrid,
    noise: NoiseTrajectory,
    bc: BoundaryChoice = DEFAULT_BC,
    system: LocalSystem | None = None,
) -> Solution:
    """h on [0, t]: I[h] = (m√λμ/2) ẇ − A/2, default h(0) = h(t) = 0.

    ẇ acts through central differences, which is the weak form against hat
    functions; no pointwise derivative of the path is taken.
    """
    if grid.n_steps < MIN_H_STEPS:
        raise ValueError(f"grid too coarse for h: n_steps={grid.n_steps} < {MIN_H_STEPS}")
    if len(noise.values) != len(grid) or noise.grid.t_end != grid.t_end:
        raise ValueError("noise and grid do not match")
    system = system or LocalSystem(params, grid)
    rhs, coeff = h_sources(params, noise)
    return system.solve(rhs, bc.h, coeff, noise.values)
