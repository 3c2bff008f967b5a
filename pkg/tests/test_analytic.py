import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmcollapse.analytic import (
    BoundaryChoice,
    ExpSeries,
    Term,
    basis_functions,
    characteristic_roots,
    operator_constants,
    quartic_coefficients,
    solve_f,
    solve_g,
    solve_h,
    solve_local_f,
    solve_local_g,
)
from nmcollapse.ide import f_problem, g_problem, h_problem, residual, weak_residual
from nmcollapse.model import ExponentialKernel, ModelParams, TimeGrid, trapezoid
from nmcollapse.noise import NoiseTrajectory, sample

P = ModelParams(lam=0.5, mu=0.1, gamma=1.0)


@settings(max_examples=50)
@given(st.floats(0.1, 10), st.floats(0.0, 3), st.floats(0.0, 1.0))
def test_roots_solve_quartic(gamma, lam, mu):
    roots = characteristic_roots(ModelParams(lam=lam, mu=mu, gamma=gamma))
    assert max(roots.quartic_residuals(ModelParams(lam=lam, mu=mu, gamma=gamma))) < 1e-12


def test_roots_white_collapse_free_limit():
    # λ = 0: υ² ∈ {γ², 0}
    roots = characteristic_roots(ModelParams(lam=0.0, gamma=2.0))
    assert roots.upsilon1 == pytest.approx(2.0) and abs(roots.upsilon2) < 1e-12


def test_roots_reject_oscillator():
    with pytest.raises(ValueError, match="free particle only"):
        characteristic_roots(ModelParams(lam=0.5, omega=1.0))


def test_operator_constants_reproduce_quartic():
    # applying d²/ds² − γ² to the local form gives υ⁴ − pυ² + q
    c0, K, Q = operator_constants(P)
    m, g = P.m, P.gamma
    p2, q0 = quartic_coefficients(P)
    # (m/2)υ⁴ + (c0 − (m/2)γ²)υ² − γ²c0 + 2γK for υ⁴ coefficient m/2
    assert -(c0 - 0.5 * m * g * g) / (0.5 * m) == pytest.approx(p2)
    assert (-g * g * c0 + 2 * g * K) / (0.5 * m) == pytest.approx(q0)
    assert Q == pytest.approx(4 * m * (P.lam * P.mu) ** 2 * g / 16)


def test_free_limit_linear_solutions():
    grid = TimeGrid(1.7, 50)
    s = grid.nodes
    f, g = solve_f(P.replace(lam=0.0), grid), solve_g(P.replace(lam=0.0), grid)
    np.testing.assert_allclose(f.values, 1 - s / 1.7, atol=1e-14)
    np.testing.assert_allclose(g.values, s / 1.7, atol=1e-14)
    assert f.d1_start == pytest.approx(-1 / 1.7) and g.d1_end == pytest.approx(1 / 1.7)


def test_small_lambda_approaches_free_limit():
    grid = TimeGrid(1.0, 20)
    s = grid.nodes
    prev = np.inf
    for lam in (1e-2, 1e-4, 1e-6):
        err = np.max(np.abs(solve_f(P.replace(lam=lam), grid).values - (1 - s)))
        assert err < prev
        prev = err
    assert prev < 1e-6


def test_boundary_values_exact():
    grid = TimeGrid(2.3, 40)
    f, g = solve_f(P, grid), solve_g(P, grid)
    assert (f.values[0], f.values[-1], g.values[0], g.values[-1]) == (1, 0, 0, 1)
    lit = solve_f(P, grid, BoundaryChoice.literal())
    assert lit.values[0] == 1 and lit.values[-1] == 1


@pytest.mark.parametrize("which", ["f", "g"])
def test_strong_residual_converges_second_order(which):
    k = ExponentialKernel(P.gamma)
    res = []
    for n in (500, 1000, 2000):
        grid = TimeGrid(2.0, n)
        if which == "f":
            res.append(residual(f_problem(P, k, grid), solve_f(P, grid)))
        else:
            res.append(residual(g_problem(P, k, grid), solve_g(P, grid)))
    orders = np.log2(np.array(res[:-1]) / res[1:])
    np.testing.assert_allclose(orders, 2.0, atol=0.1)


def test_end_conditions_of_published_form():
    # for f(t) = 0 the published f̈(0), f̈(t) conditions are the equation at the ends
    p = ModelParams(lam=0.8, mu=0.3, gamma=1.4)
    t = 1.5
    grid = TimeGrid(t, 40000)
    f = solve_f(p, grid)
    s, dt = grid.nodes, grid.dt
    lm, g, hb, m = p.lam * p.mu, p.gamma, p.hbar, p.m
    e0, et = np.exp(-g * s), np.exp(-g * (t - s))
    lhs0 = lm**2 * f.values[0] + lm * g * trapezoid(e0 * f.d1, dt) + (lm**2 * g + 1j * hb * p.lam * g / m) * trapezoid(
        e0 * f.values, dt
    )
    lhst = (
        lm**2 * f.values[-1]
        - lm * g * trapezoid(et * f.d1, dt)
        + (1.5 * lm**2 * g + 1j * hb * p.lam * g / m) * trapezoid(et * f.values, dt)
        - 0.5 * lm**2 * g * trapezoid(np.exp(-g * (t + s)) * f.values, dt)
    )
    assert f.d2[0] == pytest.approx(lhs0, rel=1e-7)
    assert f.d2[-1] == pytest.approx(lhst, rel=1e-7)


@pytest.mark.parametrize("u", [0.3, 0.9, 1.6 + 0.8j])
def test_basis_choices_agree_in_overlap(u):
    p = ModelParams(lam=0.6, mu=0.2, gamma=u.real if isinstance(u, complex) else u)
    t = 1.9 / abs(characteristic_roots(p).upsilon1)
    grid = TimeGrid(t, 64)
    a = solve_f(p, grid, basis="hyperbolic")
    b = solve_f(p, grid, basis="anchored")
    assert np.max(np.abs(a.values - b.values)) < 1e-8
    assert abs(a.d1_start - b.d1_start) < 1e-8 * max(1, abs(a.d1_start))


def test_basis_functions_count_and_degenerate_roots():
    roots = characteristic_roots(P)
    assert len(basis_functions(roots, 1.0)) == 4


def test_long_times_do_not_overflow():
    p = ModelParams(lam=2.0, mu=0.3, gamma=5.0)
    grid = TimeGrid(400.0, 400)
    f = solve_f(p, grid)
    assert np.all(np.isfinite(f.values)) and np.isfinite(f.d1_start)
    assert f.values[-1] == 0


def test_exp_series_integral_matches_quadrature():
    e = ExpSeries([Term(1.0, 0.7 + 0.2j, 0.0, 0), Term(2.0, -1.1, 1.0, 1)])
    s = np.linspace(0, 1.0, 20001)
    direct = trapezoid(np.exp(-0.5 * s) * e(s), s[1] - s[0])
    assert e.weighted_integral(-0.5, 0.0, 1.0) == pytest.approx(direct, rel=1e-8)
    np.testing.assert_allclose(e(s, 1)[1:-1], np.gradient(e(s), s)[1:-1], rtol=1e-6)


def test_local_solver_matches_closed_form():
    grid = TimeGrid(1.5, 1200)
    for closed, local in ((solve_f, solve_local_f), (solve_g, solve_local_g)):
        a, b = closed(P, grid), local(P, grid)
        assert np.max(np.abs(a.values - b.values)) < 1e-5
        assert abs(a.d1_start - b.d1_start) < 1e-4 and abs(a.d1_end - b.d1_end) < 1e-4


def test_oscillator_without_collapse_is_classical():
    p = ModelParams(lam=0.0, omega=1.3)
    t = 1.1
    grid = TimeGrid(t, 2000)
    s = grid.nodes
    f, g = solve_local_f(p, grid), solve_local_g(p, grid)
    w = p.omega
    np.testing.assert_allclose(f.values, np.sin(w * (t - s)) / np.sin(w * t), atol=1e-6)
    np.testing.assert_allclose(g.values, np.sin(w * s) / np.sin(w * t), atol=1e-6)


def test_h_vanishes_without_noise_and_is_linear_in_it():
    k = ExponentialKernel(P.gamma)
    grid = TimeGrid(1.0, 200)
    zero = NoiseTrajectory(grid, np.zeros(len(grid)))
    assert np.max(np.abs(solve_h(P, grid, zero).values)) == 0
    w1, w2 = sample(k, grid, 1), sample(k, grid, 2)
    mix = NoiseTrajectory(grid, 2 * w1.values - w2.values)
    np.testing.assert_allclose(
        solve_h(P, grid, mix).values, 2 * solve_h(P, grid, w1).values - solve_h(P, grid, w2).values, atol=1e-12
    )


def test_h_weak_residual_and_boundaries():
    k = ExponentialKernel(P.gamma)
    grid = TimeGrid(1.0, 800)
    noise = sample(k, grid, 9)
    h = solve_h(P, grid, noise)
    assert h.values[0] == 0 and h.values[-1] == 0
    assert weak_residual(h_problem(P, k, noise), h.values) < 1e-4


def test_h_smooth_source_converges():
    k = ExponentialKernel(P.gamma)
    errs, ref = [], None
    for n in (200, 400, 800, 1600):
        grid = TimeGrid(1.0, n)
        noise = NoiseTrajectory(grid, np.cos(3 * grid.nodes))
        h = solve_h(P, grid, noise)
        if ref is not None:
            errs.append(np.max(np.abs(h.values[::2] - ref)))
        ref = h.values
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)


def test_h_rejects_coarse_grid():
    grid = TimeGrid(1.0, 8)
    with pytest.raises(ValueError, match="too coarse"):
        solve_h(P, grid, sample(ExponentialKernel(1.0), grid, 0))
