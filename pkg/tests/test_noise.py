import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nmcollapse.model import ExponentialKernel, TimeGrid, WhiteLimit, trapezoid
from nmcollapse.noise import NoiseTrajectory, integral_against, sample, sample_many

K = ExponentialKernel(2.0)
GRID = TimeGrid(1.0, 50)


def test_seeded_reproducibility():
    a, b = sample(K, GRID, 7), sample(K, GRID, 7)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample(K, GRID, 8).values)
    assert [n.seed for n in sample_many(K, GRID, [1, 2])] == [1, 2]


def test_values_read_only_and_real():
    w = sample(K, GRID, 1)
    assert w.values.dtype == float
    with pytest.raises(ValueError):
        w.values[0] = 1.0


def test_w0_modes():
    assert sample(K, GRID, 3, "zero").w0 == 0.0
    assert sample(K, GRID, 3, "stationary").w0 != 0.0
    with pytest.raises(ValueError):
        sample(K, GRID, 3, "pinned")


def test_white_limit_cannot_be_sampled():
    with pytest.raises(ValueError):
        sample(WhiteLimit(), GRID, 0)


def test_stationary_variance():
    vals = np.array([sample(K, TimeGrid(1.0, 4), s).values for s in range(20000)])
    # variance γ/2 = 1 at every node, standard error about 0.01
    np.testing.assert_allclose(vals.var(axis=0), 1.0, atol=0.05)


def test_restrict():
    w = sample(K, GRID, 2)
    r = w.restrict(10)
    assert r.grid.t_end == pytest.approx(0.2) and np.array_equal(r.values, w.values[:11])


def test_length_mismatch():
    with pytest.raises(ValueError):
        NoiseTrajectory(GRID, np.zeros(3))
    with pytest.raises(ValueError):
        integral_against(sample(K, GRID, 0), np.zeros(3))


@given(st.integers(0, 10_000))
def test_integration_by_parts_matches_discrete_derivative(seed):
    w = sample(K, TimeGrid(1.0, 2000), seed)
    s = w.grid.nodes
    e, de = np.sin(3 * s), 3 * np.cos(3 * s)
    by_parts = integral_against(w, e, "against_derivative", de)
    direct = np.sum(np.diff(w.values) * 0.5 * (e[1:] + e[:-1]))
    assert by_parts == pytest.approx(direct, abs=2e-3)


def test_integral_modes():
    w = NoiseTrajectory(TimeGrid(1.0, 100), np.linspace(0, 1, 101))
    e = np.ones(101)
    assert integral_against(w, e) == pytest.approx(0.5)
    # ∫ ẇ·1 = w(1) − w(0)
    assert integral_against(w, e, "against_derivative", np.zeros(101)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        integral_against(w, e, "against_derivative")
    with pytest.raises(ValueError):
        integral_against(w, e, "bogus")
    assert trapezoid(w.values, 0.01) == pytest.approx(0.5)
