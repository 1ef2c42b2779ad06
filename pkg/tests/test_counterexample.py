import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markovcalc import counterexample as cx
from markovcalc.errors import GammaOnUnitCircle, InputError, NumericalOverflow

vs = st.floats(0.1, 10.0)
zs = st.tuples(st.floats(1e-3, 5.0), st.floats(-5.0, 5.0)).map(lambda p: complex(*p))


@settings(max_examples=100, deadline=None)
@given(vs, zs)
def test_closed_form_norm_matches_dense(v, z):
    assert cx.two_point_weighted_norm_exact(v, z) == pytest.approx(
        cx.two_point_norm_dense(v, z), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vs, zs)
def test_norm_at_least_one_and_symmetric_in_v(v, z):
    n = cx.two_point_weighted_norm_exact(v, z)
    assert n >= 1 - 1e-12
    assert cx.two_point_weighted_norm_exact(1 / v, z) == pytest.approx(n, rel=1e-12)


def test_unit_weight_is_contractive():
    z = np.array([0.3 + 2j, 1.0, 0.01 - 4j])
    assert np.allclose(cx.two_point_weighted_norm_exact(1.0, z), 1.0, atol=1e-14)


def test_config_validation():
    with pytest.raises(InputError):
        cx.TwoPointConfig(1.0, -1j)
    with pytest.raises(InputError):
        cx.TwoPointConfig(0.0, 1.0)
    assert cx.TwoPointConfig(2.0, 0.5).gamma == pytest.approx(np.exp(-1.0))
    with pytest.raises(GammaOnUnitCircle):
        cx.d_gamma(1.0)


@pytest.mark.parametrize("phi", [0.0, 0.4, 0.9, 1.3])
@pytest.mark.parametrize("r", [1e-3, 0.05, 0.5, 1.0])
def test_direct_expansion_matches_measured_coefficient(phi, r):
    res = cx.asymptotic_check(phi, r)
    assert res["exact_deviation"] <= 1e-3


@pytest.mark.parametrize("phi", [0.0, 0.5, 1.0])
def test_small_r_limit_of_the_direct_expansion(phi):
    r = 1e-4
    g = np.exp(-2 * r * np.exp(1j * phi))
    assert cx.exact_quadratic_coefficient(g) / r == pytest.approx(
        1 / (2 * np.cos(phi)), rel=1e-3)


def test_asymptotic_check_needs_halving_sweep():
    with pytest.raises(InputError):
        cx.asymptotic_check(0.5, 0.1, eps=(1e-3, 4e-4))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_two_point_q2_symmetry(u, v):
    q = cx.two_point_q2(u, v)
    assert q >= 1 - 1e-12
    assert q == pytest.approx(cx.two_point_q2(v, u), rel=1e-14)
    assert q == pytest.approx(cx.two_point_q2(3 * u, 3 * v), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 1.5), min_size=1, max_size=4), zs)
def test_tensor_laws_against_dense(eps, z):
    ts = cx.TensorSemigroup(tuple(eps))
    assert cx.tensor_q2(ts) == pytest.approx(cx.dense_tensor_q2(ts), rel=1e-10)
    assert cx.tensor_norm(ts, z) == pytest.approx(cx.dense_tensor_norm(ts, z), rel=1e-10)


def test_tensor_overflow_and_validation():
    ts = cx.TensorSemigroup.uniform(10**6, 1.0)
    with pytest.raises(NumericalOverflow):
        cx.tensor_norm(ts, 0.01 + 1j)
    assert np.isfinite(cx.log_tensor_norm(ts, 0.01 + 1j))
    with pytest.raises(InputError):
        cx.TensorSemigroup(())
    assert (cx.TensorSemigroup((0.1,)) + cx.TensorSemigroup((0.2, 0.3))).N == 3


def test_quadratic_constant_and_uniform_bound():
    assert cx.quadratic_q2_constant() == pytest.approx(1.0, abs=1e-12)
    for N in (1, 4, 16, 256, 4096):
        ts = cx.TensorSemigroup.uniform(N, 1 / np.sqrt(N))
        assert cx.tensor_q2(ts) <= np.e
    fam = cx.DirectSumFamily(30)
    assert fam.total_mass == pytest.approx(1.0, abs=1e-8)
    assert fam.q2_bound() == pytest.approx(np.e)


@pytest.mark.parametrize("tan2, N", [(4.0, 4), (np.tan(np.arctan(2.0)) ** 2, 4), (4.5, 5),
                                     (0.3, 1)])
def test_factor_count(tan2, N):
    assert cx.factor_count(tan2) == N


def test_single_angle_report():
    rep = cx.hormander_failure_experiment([1.0])
    assert len(rep["rows"]) == 1
    assert rep["verdict"]["hormander_fails"] is False
    assert "note" in rep["verdict"]


def test_report_serialisation():
    rep = cx.hormander_failure_experiment((4, 16))
    lines = cx.rows_to_csv(rep["rows"]).strip().splitlines()
    assert len(lines) == 3 and lines[0].startswith("phi")
    doc = json.loads(cx.verdict_json(rep))
    assert {"uniform_Q", "fitted_c", "hormander_fails", "r_warning"} <= set(doc)


def test_log_norm_grows_with_angle():
    rep = cx.hormander_failure_experiment((4, 16, 64, 256))
    y = [row["log_norm"] for row in rep["rows"]]
    assert all(b > a for a, b in zip(y, y[1:]))
