import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmcollapse import ide
from nmcollapse.analytic import solve_f, solve_g
from nmcollapse.ide import (
    BoundarySpec,
    IdeProblem,
    IllConditionedError,
    apply_I,
    f_problem,
    g_problem,
    h_problem,
    operator_matrix,
    residual,
    solve_direct,
    weak_residual,
)
from nmcollapse.model import ExponentialKernel, ModelParams, TimeGrid, WhiteLimit, b_kernel, trapezoid
from nmcollapse.noise import sample

P = ModelParams(lam=0.7, mu=0.25, gamma=1.6, omega=0.4)
K = ExponentialKernel(P.gamma)


def brute_force_I(p, k, grid, e, d2, j):
    """The operator term by term at node j, O(n²) per node."""
    s = grid.nodes[j]
    dt = grid.dt
    nodes = grid.nodes
    lo, hi = nodes[: j + 1], nodes[j:]
    b_lo = np.array([b_kernel(p, k, r, s, grid) for r in lo])
    b_hi = np.array([b_kernel(p, k, s, r, grid) for r in hi])
    # ∂D(r,s)/∂r for r < s and ∂D(r,s)/∂s for r > s are both +γD
    d_lo, d_hi = p.gamma * k(lo, s), p.gamma * k(hi, s)
    lm = p.m * p.lam * p.mu
    return (
        0.5 * p.m * d2[j]
        + 0.5 * p.m * (p.Omega2 + 4 * p.lam * p.mu * k(s, s)) * e[j]
        - 0.5 * trapezoid(b_lo * e[: j + 1], dt)
        - 0.5 * trapezoid(b_hi * e[j:], dt)
        - lm * trapezoid(d_lo * e[: j + 1], dt)
        - lm * trapezoid(d_hi * e[j:], dt)
    )


def test_apply_I_matches_term_by_term_operator():
    grid = TimeGrid(1.3, 60)
    rng = np.random.default_rng(3)
    e = rng.standard_normal(len(grid)) + 1j * rng.standard_normal(len(grid))
    d2 = rng.standard_normal(len(grid))
    fast = apply_I(g_problem(P, K, grid), e, d2)
    for j in (0, 1, 17, 59, 60):
        assert fast[j] == pytest.approx(brute_force_I(P, K, grid, e, d2, j), rel=1e-11, abs=1e-12)


def test_operator_matrix_equals_apply_I():
    grid = TimeGrid(2.0, 80)
    rng = np.random.default_rng(4)
    e = rng.standard_normal(len(grid))
    d2 = rng.standard_normal(len(grid))
    np.testing.assert_allclose(
        operator_matrix(P, K, grid) @ e + 0.5 * P.m * d2, apply_I(g_problem(P, K, grid), e, d2), rtol=1e-11, atol=1e-12
    )


@settings(max_examples=25)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_apply_I_is_linear(a, b):
    grid = TimeGrid(1.0, 30)
    rng = np.random.default_rng(5)
    e1, e2, d1, d2 = rng.standard_normal((4, len(grid)))
    prob = g_problem(P, K, grid)
    lhs = apply_I(prob, a * e1 + b * e2, a * d1 + b * d2)
    rhs = a * apply_I(prob, e1, d1) + b * apply_I(prob, e2, d2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_apply_I_requires_second_derivative():
    grid = TimeGrid(1.0, 10)
    with pytest.raises(ValueError, match="second derivative"):
        apply_I(g_problem(P, K, grid), np.zeros(11))
    with pytest.raises(ValueError):
        g_problem(P, WhiteLimit(), grid)


def test_problem_validation():
    grid = TimeGrid(1.0, 10)
    with pytest.raises(ValueError):
        IdeProblem(P, K, grid, np.zeros(3), BoundarySpec(0, 0))
    with pytest.raises(ValueError, match="noise"):
        IdeProblem(P, K, grid, np.zeros(11), BoundarySpec(0, 0), wdot_coeff=1.0)


def test_direct_solver_against_closed_form_and_order():
    p = P.replace(omega=0.0)
    errs = []
    for n in (128, 256, 512):
        grid = TimeGrid(1.5, n)
        d = solve_direct(f_problem(p, K, grid))
        errs.append(np.max(np.abs(d.values - solve_f(p, grid).values)))
        assert d.values[0] == pytest.approx(1) and abs(d.values[-1]) < 1e-14
        assert d.condition < ide.COND_LIMIT
    assert errs[-1] < 1e-4
    np.testing.assert_allclose(np.log2(np.array(errs[:-1]) / errs[1:]), 2.0, atol=0.2)


def test_direct_solution_residual_small():
    grid = TimeGrid(1.0, 512)
    prob = g_problem(P, K, grid)
    d = solve_direct(prob)
    assert residual(prob, d) < 1e-10
    assert weak_residual(prob, d.values) < 1e-4


def test_direct_fixed_second_derivative():
    # I[e] = 0 with ë pinned at both ends instead of collocated
    grid = TimeGrid(1.0, 64)
    prob = g_problem(P, K, grid, BoundarySpec(0.0, 1.0, 0.3, -0.2))
    d = solve_direct(prob)
    assert d.values[-1] == pytest.approx(1.0)
    assert d.d2[0] == pytest.approx(0.3) and d.d2[-1] == pytest.approx(-0.2)


def test_direct_needs_enough_steps():
    with pytest.raises(ValueError, match="n_steps"):
        solve_direct(g_problem(P, K, TimeGrid(1.0, 16)))


def test_ill_conditioned_error_carries_condition():
    err = IllConditionedError("singular", 1e15)
    assert err.condition == 1e15 and isinstance(err, RuntimeError)


def test_weak_residual_rejects_wrong_function():
    p = P.replace(omega=0.0)
    grid = TimeGrid(1.0, 2000)
    g = solve_g(p, grid)
    prob = g_problem(p, K, grid)
    # quadrature error of the test integrals is O(Δt²)
    assert weak_residual(prob, g.values) < 1e-5
    assert weak_residual(prob, g.values + 0.01 * np.sin(np.pi * grid.nodes)) > 1e-3


def test_test_functions_vanish_at_ends():
    psi, dpsi, _ = ide.test_functions(TimeGrid(2.0, 100), 4)
    assert np.allclose(psi[:, [0, -1]], 0) and np.allclose(dpsi[:, [0, -1]], 0)


def test_strong_rhs_finite_differences_noise():
    grid = TimeGrid(1.0, 200)
    noise = sample(K, grid, 1)
    prob = h_problem(P, K, noise)
    expected = prob.rhs + prob.wdot_coeff * np.gradient(noise.values, grid.dt, edge_order=2)
    np.testing.assert_allclose(prob.strong_rhs(), expected)
