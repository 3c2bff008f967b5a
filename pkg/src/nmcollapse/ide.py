"""Numerical integro-differential operator for the Green's-function equations.

For the exponential kernel the operator acting on e(s), s ∈ [0, t], is

    I[e](s) = (m/2) ë + (m/2)(Ω² + 4λμ D(s,s)) e
              − ½ ∫_0^s B(r,s) e(r) dr − ½ ∫_s^t B(s,r) e(r) dr
              − mλμ ∫_0^s ∂_r D(r,s) e(r) dr − mλμ ∫_s^t ∂_s D(r,s) e(r) dr.

Both kernel derivatives equal +γD on their own side of the diagonal. All four
integrals are composite trapezoid sums; :func:`apply_I` evaluates them with
O(n) recursions and :func:`operator_matrix` builds the identical dense
quadrature matrix used by :func:`solve_direct`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, onenormest

from .model import (
    CorrelationKernel,
    ExponentialKernel,
    ModelParams,
    TimeGrid,
    a_drive_series,
    b_coefficients,
    decayed_cumulative,
    diagonal_inner,
    require_exponential,
    trapezoid,
)
from .noise import NoiseTrajectory


class IllConditionedError(RuntimeError):
    """A boundary-value linear system is singular to working precision."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


COND_LIMIT = 1e12


@dataclass(frozen=True)
class BoundarySpec:
    """Four conditions for a solution on [0, t].

    ``left``/``right`` are the end values. A second-derivative entry of
    ``None`` means "the integro-differential equation also holds at that
    end" (this generalises the f̈(0), f̈(t) conditions obtained for f); a
    number fixes ë there instead.
    """

    left: complex
    right: complex
    left_second: complex | None = None
    right_second: complex | None = None


@dataclass(frozen=True)
class IdeProblem:
    """I[e] = rhs + wdot_coeff · ẇ with four boundary conditions.

    The ẇ part is kept separate because it only makes sense weakly.
    """

    params: ModelParams
    kernel: CorrelationKernel
    grid: TimeGrid
    rhs: np.ndarray
    bc: BoundarySpec
    wdot_coeff: float = 0.0
    noise: NoiseTrajectory | None = field(default=None, compare=False)

    def __post_init__(self):
        rhs = np.asarray(self.rhs, dtype=complex)
        if rhs.shape != (len(self.grid),):
            raise ValueError(f"rhs length {rhs.shape} does not match grid of {len(self.grid)} nodes")
        object.__setattr__(self, "rhs", rhs)
        if self.wdot_coeff != 0 and self.noise is None:
            raise ValueError("a noise-derivative source needs the noise trajectory")

    def strong_rhs(self) -> np.ndarray:
        """rhs with ẇ replaced by second-order finite differences."""
        if self.wdot_coeff == 0:
            return self.rhs
        return self.rhs + self.wdot_coeff * np.gradient(self.noise.values, self.grid.dt, edge_order=2)


def f_problem(params: ModelParams, kernel: CorrelationKernel, grid: TimeGrid, bc: BoundarySpec | None = None) -> IdeProblem:
    """I[f] = mλμ D(0, s)."""
    kern = require_exponential(kernel)
    rhs = params.m * params.lam * params.mu * kern(0.0, grid.nodes)
    return IdeProblem(params, kern, grid, rhs, bc or BoundarySpec(1.0, 0.0))


def g_problem(params: ModelParams, kernel: CorrelationKernel, grid: TimeGrid, bc: BoundarySpec | None = None) -> IdeProblem:
    """I[g] = 0."""
    return IdeProblem(params, require_exponential(kernel), grid, np.zeros(len(grid)), bc or BoundarySpec(0.0, 1.0))


def h_problem(params: ModelParams, kernel: CorrelationKernel, noise: NoiseTrajectory, bc: BoundarySpec | None = None) -> IdeProblem:
    """I[h] = (m√λμ/2) ẇ − A/2 on the noise grid."""
    kern = require_exponential(kernel)
    rhs = -0.5 * a_drive_series(params, kern, noise)
    coeff = 0.5 * params.m * np.sqrt(params.lam) * params.mu
    return IdeProblem(params, kern, noise.grid, rhs, bc or BoundarySpec(0.0, 0.0), coeff, noise)


def local_coefficient(params: ModelParams, kernel: ExponentialKernel) -> float:
    """(m/2)(Ω² + 4λμ D(s,s))."""
    return 0.5 * params.m * (params.Omega2 + 2.0 * params.lam * params.mu * kernel.gamma)


def _memory_part(params: ModelParams, kernel: ExponentialKernel, grid: TimeGrid, e: np.ndarray) -> np.ndarray:
    """The four integral terms of I[e] (with their signs), all nodes."""
    g = kernel.gamma
    dt = grid.dt
    c1, c2 = b_coefficients(params)
    diag = 0.5 * g * c1 + c2 * diagonal_inner(kernel, grid)
    e = np.asarray(e, dtype=complex)
    below_b = decayed_cumulative(diag * e, g, dt)
    # ∫_s^t e^{−γ(r−s)} e(r) dr via the reversed recursion
    above = decayed_cumulative(e[..., ::-1], g, dt)[..., ::-1]
    below = decayed_cumulative(e, g, dt)
    lm = params.m * params.lam * params.mu
    return -0.5 * below_b - 0.5 * diag * above - lm * g * 0.5 * g * (below + above)


def apply_I(problem: IdeProblem, e, d2=None) -> np.ndarray:
    """I[e] at every node.

    ``e`` is either an array of values (then ``d2`` must hold ë) or any
    object with ``values`` and ``d2`` attributes.
    """
    values, d2 = _unpack(e, d2)
    kern = require_exponential(problem.kernel)
    if values.shape != (len(problem.grid),):
        raise ValueError("solution length does not match the problem grid")
    return (
        0.5 * problem.params.m * d2
        + local_coefficient(problem.params, kern) * values
        + _memory_part(problem.params, kern, problem.grid, values)
    )


def _unpack(e, d2):
    if hasattr(e, "values") and hasattr(e, "d2"):
        values, d2 = e.values, e.d2
    else:
        values = e
    if d2 is None:
        raise ValueError("apply_I needs the second derivative of e")
    return np.asarray(values, dtype=complex), np.asarray(d2, dtype=complex)


def residual(problem: IdeProblem, e, d2=None) -> float:
    """max_s |I[e] − rhs| / max(1, max_s |e|)."""
    values, d2 = _unpack(e, d2)
    res = apply_I(problem, values, d2) - problem.strong_rhs()
    return float(np.max(np.abs(res)) / max(1.0, np.max(np.abs(values))))


def test_functions(grid: TimeGrid, n_tests: int = 8):
    """Smooth ψ_j vanishing with their first derivative at both ends.

    Returns (ψ, ψ̇, ψ̈), each of shape (n_tests, n_nodes).
    """
    t = grid.t_end
    s = grid.nodes
    a = np.pi / t
    j = np.arange(1, n_tests + 1)[:, None]
    b = j * a
    s2 = np.sin(a * s) ** 2
    ds2 = a * np.sin(2 * a * s)
    dds2 = 2 * a * a * np.cos(2 * a * s)
    c, sn = np.cos(b * s), np.sin(b * s)
    psi = s2 * c
    dpsi = ds2 * c - b * s2 * sn
    ddpsi = dds2 * c - 2 * b * ds2 * sn - b * b * s2 * c
    return psi, dpsi, ddpsi


def weak_residual(problem: IdeProblem, values, n_tests: int = 8) -> float:
    """Residual of I[e] = rhs + c ẇ tested against smooth bump functions.

    ⟨I[e] − rhs − cẇ, ψ⟩ is evaluated with ë and ẇ moved onto ψ, so only
    the values of e and w are used. Each test is normalised by ∫|ψ| and the
    largest is divided by max(1, max|e|), matching :func:`residual`.
    """
    kern = require_exponential(problem.kernel)
    e = np.asarray(values, dtype=complex)
    grid = problem.grid
    dt = grid.dt
    psi, dpsi, ddpsi = test_functions(grid, n_tests)
    nonderiv = local_coefficient(problem.params, kern) * e + _memory_part(problem.params, kern, grid, e)
    lhs = trapezoid(0.5 * problem.params.m * e * ddpsi + nonderiv * psi, dt)
    rhs = trapezoid(problem.rhs * psi, dt)
    if problem.wdot_coeff != 0:
        rhs = rhs - problem.wdot_coeff * trapezoid(problem.noise.values * dpsi, dt)
    norm = trapezoid(np.abs(psi), dt)
    return float(np.max(np.abs(lhs - rhs) / norm) / max(1.0, np.max(np.abs(e))))


def operator_matrix(params: ModelParams, kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """Dense trapezoid matrix of the integral terms plus the local term.

    ``operator_matrix(...) @ e + (m/2) ë`` equals :func:`apply_I`.
    """
    kern = require_exponential(kernel)
    g = kern.gamma
    dt = grid.dt
    n = len(grid)
    s = grid.nodes
    idx = np.arange(n)
    lower = idx[None, :] <= idx[:, None]  # r ≤ s
    upper = ~lower | (idx[None, :] == idx[:, None])
    w_lower = np.where(lower, dt, 0.0)
    w_lower[:, 0] *= 0.5
    w_lower[idx, idx] *= 0.5
    w_lower[0, 0] = 0.0
    w_upper = np.where(upper, dt, 0.0)
    w_upper[:, -1] *= 0.5
    w_upper[idx, idx] *= 0.5
    w_upper[-1, -1] = 0.0
    decay = np.exp(-g * np.abs(s[:, None] - s[None, :]))
    c1, c2 = b_coefficients(params)
    diag = 0.5 * g * c1 + c2 * diagonal_inner(kern, grid)
    lm = params.m * params.lam * params.mu
    mat = -0.5 * w_lower * decay * diag[None, :] - 0.5 * w_upper * decay * diag[:, None]
    mat = mat - lm * 0.5 * g * g * (w_lower + w_upper) * decay
    mat[idx, idx] += local_coefficient(params, kern)
    return mat


def condition_estimate(a: np.ndarray, lu_piv) -> float:
    """1-norm condition number estimate from an LU factorisation."""
    n = a.shape[0]
    inv = LinearOperator(
        (n, n),
        matvec=lambda x: sla.lu_solve(lu_piv, x),
        rmatvec=lambda x: sla.lu_solve(lu_piv, x, trans=2),
        dtype=complex,
    )
    return float(np.linalg.norm(a, 1) * onenormest(inv))


def solve_direct(problem: IdeProblem) -> "DirectSolution":
    """Discretise and solve the boundary-value problem densely.

    ë uses second-order central differences with one ghost node beyond each
    end, the integral terms use the trapezoid matrix of
    :func:`operator_matrix`, and the equation is collocated at every node
    including the ends (unless a fixed ë is given there).
    """
    grid = problem.grid
    if grid.n_steps < 32:
        raise ValueError(f"solve_direct needs n_steps >= 32, got {grid.n_steps}")
    n = len(grid)
    dt = grid.dt
    m = problem.params.m
    scale = 2.0 * dt * dt / m  # puts the stencil rows at O(1)
    a = np.zeros((n + 2, n + 2), dtype=complex)
    b = np.zeros(n + 2, dtype=complex)
    mat = operator_matrix(problem.params, problem.kernel, grid)
    rhs = problem.strong_rhs()
    rows = np.arange(n)
    a[rows, 1:-1] = scale * mat
    a[rows, rows] += 1.0
    a[rows, rows + 1] += -2.0
    a[rows, rows + 2] += 1.0
    b[:n] = scale * rhs
    bc = problem.bc
    for row, second in ((0, bc.left_second), (n - 1, bc.right_second)):
        if second is not None:
            a[row, :] = 0.0
            a[row, row : row + 3] = (1.0, -2.0, 1.0)
            b[row] = dt * dt * second
    a[n, 1] = 1.0
    b[n] = bc.left
    a[n + 1, n] = 1.0
    b[n + 1] = bc.right
    lu_piv = sla.lu_factor(a, check_finite=True)
    cond = condition_estimate(a, lu_piv)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError("direct integro-differential system is singular", cond)
    x = sla.lu_solve(lu_piv, b)
    values = x[1:-1]
    d1 = (x[2:] - x[:-2]) / (2 * dt)
    d2 = (x[2:] - 2 * x[1:-1] + x[:-2]) / (dt * dt)
    return DirectSolution(grid, values, d1, d2, cond)


@dataclass(frozen=True)
class DirectSolution:
    grid: TimeGrid
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    condition: float
