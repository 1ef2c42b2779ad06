import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markovcalc.errors import DimensionMismatch, InputError
from markovcalc.semigroup import (SUBMARKOVIAN, MeasureSpace, random_generator,
                                  semigroup_at, two_point_generator)
from markovcalc.weights import (DiscreteMetricSpace, as_weight, classical_characteristic,
                                cutoff, cutoff_monotonicity_check, cycle_laplacian,
                                cycle_metric_space, power_weight, q2_characteristic,
                                q2_curve, q2_tilde_characteristic)

seeds = st.integers(0, 2**32 - 1)


def test_two_point_value():
    res = q2_characteristic(two_point_generator(), [1.0, 4.0])
    assert res.value == pytest.approx(1.5625, abs=1e-12)
    assert np.isinf(res.argmax_t) or res.curve[-1] == pytest.approx(res.value, rel=1e-12)


def test_constant_weight_is_one():
    gen = random_generator(5, np.random.default_rng(0))
    assert q2_characteristic(gen, np.full(5, 3.0)).value == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 7), st.floats(0.1, 2.0))
def test_characteristic_at_least_one_and_scale_free(seed, n, spread):
    rng = np.random.default_rng(seed)
    gen = random_generator(n, rng)
    w = np.exp(spread * rng.standard_normal(n))
    q = q2_characteristic(gen, w).value
    assert q >= 1 - 1e-12
    assert q2_characteristic(gen, 7.5 * w).value == pytest.approx(q, rel=1e-10)
    assert q2_characteristic(gen, 1 / w).value == pytest.approx(q, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 6))
def test_curve_matches_dense_semigroup(seed, n):
    rng = np.random.default_rng(seed)
    gen = random_generator(n, rng)
    w = np.exp(rng.standard_normal(n))
    t, curve = q2_curve(gen, w, [0.0, 0.5, 3.0])
    for k, tk in enumerate(t):
        T = semigroup_at(gen, tk)
        assert curve[k] == pytest.approx(((T @ w) * (T @ (1 / w))).max(), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 6), st.floats(1.0, 5.0))
def test_cutoff_does_not_increase_characteristic(seed, n, level):
    rng = np.random.default_rng(seed)
    gen = random_generator(n, rng)
    w = np.exp(2 * rng.standard_normal(n))
    cw = cutoff(w, level)
    assert cw.min() >= 1 / level - 1e-15 and cw.max() <= level + 1e-15
    assert cutoff_monotonicity_check(gen, w, level)


def test_tilde_characteristic_is_at_least_one():
    rng = np.random.default_rng(5)
    gen = random_generator(4, rng, SUBMARKOVIAN)
    w = np.exp(rng.standard_normal(4))
    res = q2_tilde_characteristic(gen, w)
    assert res.value >= 1 - 1e-12
    assert q2_tilde_characteristic(gen, np.ones(4)).value == pytest.approx(1.0, abs=1e-12)


def test_weight_validation():
    with pytest.raises(InputError):
        as_weight([1.0, -2.0])
    with pytest.raises(DimensionMismatch):
        as_weight([1.0, 2.0], n=3)
    with pytest.raises(InputError):
        cutoff([1.0], 0.5)


def test_classical_characteristic_by_brute_force():
    ms = cycle_metric_space(8)
    w = power_weight(ms, 2, 0.6)
    brute = 1.0
    for c in range(8):
        for r in range(5):
            ball = ms.dist[c] <= r
            brute = max(brute, w[ball].mean() * (1 / w[ball]).mean())
    assert classical_characteristic(ms, w) == pytest.approx(brute, rel=1e-12)


def test_cycle_doubling_and_metric_checks():
    ms = cycle_metric_space(16)
    assert 1 < ms.doubling <= 3
    with pytest.raises(InputError):
        DiscreteMetricSpace.build(MeasureSpace.counting(3),
                                  [[0, 1, 5], [1, 0, 1], [5, 1, 0]])


def test_cycle_laplacian_is_markovian():
    gen = cycle_laplacian(10)
    assert np.allclose(semigroup_at(gen, 2.0).sum(axis=1), 1.0)
