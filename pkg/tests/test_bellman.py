import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from markovcalc import bellman
from markovcalc.bellman import (DEFAULT_CONSTANTS, BellmanConfig, BellmanPoint, bregman,
                                calibrate_constants, certify, one_leg_defect, pieces,
                                value_and_gradient)
from markovcalc.errors import CalibrationFailed, DomainViolation, InputError

seeds = st.integers(0, 2**32 - 1)
configs = st.sampled_from([(16.0, 0.05), (40.0, 0.1), (100.0, 0.02)])


def _b4_brute(x, y, r, s, Q):
    K = np.sqrt(r * s / Q) - r * s / (8 * Q)
    alpha = np.logspace(-12, 12, 200_001)
    vals = abs(x) ** 2 / (r + alpha * K) + abs(y) ** 2 / (s + K / alpha)
    return vals.max()


@settings(max_examples=60, deadline=None)
@given(seeds, configs)
def test_sup_piece_matches_brute_force(seed, qe):
    Q, eps = qe
    x, y, r, s = (c[0] for c in bellman.sample_domain(1, Q, eps, np.random.default_rng(seed)))
    vals, _, _ = pieces(x, y, r, s, Q)
    assert vals[3] == pytest.approx(_b4_brute(x, y, r, s, Q), rel=1e-7, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, configs)
def test_gradient_matches_finite_differences(seed, qe):
    Q, eps = qe
    cfg = BellmanConfig(Q, eps)
    pts = bellman.sample_interior(20, Q, eps, np.random.default_rng(seed))
    for p in pts.values():
        assert bellman.gradient_fd_error(cfg, p).max() <= 1e-5


@settings(max_examples=30, deadline=None)
@given(seeds, configs)
def test_certified_properties_on_fresh_samples(seed, qe):
    Q, eps = qe
    cfg = BellmanConfig(Q, eps)
    rng = np.random.default_rng(seed)
    x, y, r, s = bellman.sample_domain(500, Q, eps, rng)
    val, grad, _ = value_and_gradient(x, y, r, s, cfg)
    b1 = np.abs(x) ** 2 / r + np.abs(y) ** 2 / s
    assert np.all(val >= -1e-12)
    assert np.all(val <= sum(cfg.C) * b1 * (1 + 1e-12))
    assert np.all(grad[4] <= 1e-12) and np.all(grad[5] <= 1e-12)
    V, V0 = bellman.sample_pairs(2000, Q, eps, rng)
    scale = np.abs(V[0]) ** 2 / V[2] + np.abs(V[1]) ** 2 / V[3] + 1
    assert np.all(one_leg_defect(V, V0, cfg) >= -1e-9 * scale)


def test_zero_data_vanishes():
    cfg = BellmanConfig(16.0, 0.05)
    val, grad, label = value_and_gradient(0j, 0j, 2.0, 3.0, cfg)
    assert val == 0 and np.all(grad[:4] == 0)
    assert bellman.PIECE_LABELS[int(label)] == "zero"


def test_eval_single_point():
    cfg = BellmanConfig(16.0, 0.05)
    res = bellman.eval(BellmanPoint(1 + 1j, 0.5j, 2.0, 3.0), cfg)
    assert res.gradient.shape == (6,)
    assert res.active_piece in bellman.PIECE_LABELS
    assert bregman(BellmanPoint(1 + 1j, 0.5j, 2.0, 3.0), BellmanPoint(1 + 1j, 0.5j, 2.0, 3.0),
                   cfg) == pytest.approx(0.0, abs=1e-14)


def test_domain_and_config_errors():
    cfg = BellmanConfig(16.0, 0.05)
    with pytest.raises(DomainViolation):
        value_and_gradient(1.0, 1.0, 0.5, 0.5, cfg)  # rs < 1
    with pytest.raises(InputError):
        BellmanConfig(4.0, 0.05)
    with pytest.raises(InputError):
        BellmanConfig(16.0, 0.05, (1, 1, 1, 1, 1, 0))
    assert BellmanConfig(4.0, 0.05, q_min=1.0).Q == 4.0


def test_calibration_is_deterministic_and_bounded_by_defaults():
    kw = dict(seed=3, n_points=4000, n_pairs=40_000, n_hessian=400)
    cfg_a, cert_a = calibrate_constants(16.0, 0.05, **kw)
    cfg_b, cert_b = calibrate_constants(16.0, 0.05, **kw)
    assert cert_a.to_json() == cert_b.to_json()
    # a small sample is less demanding than the full-budget run behind the defaults
    assert all(a <= b for a, b in zip(cfg_a.C, DEFAULT_CONSTANTS))
    assert cert_a.passed
    assert certify(cfg_a, seed=4, n_points=4000, n_pairs=40_000, n_hessian=400).passed


def test_calibration_failure_names_property():
    with pytest.raises(CalibrationFailed) as info:
        calibrate_constants(16.0, 0.05, n_points=2000, n_pairs=20_000, n_hessian=200,
                            max_rounds=1)
    assert info.value.prop in ("one_leg", "convexity")
    assert info.value.witness


def test_uniform_constants_are_not_convex():
    # with every constant equal to one, the sampled Hessian ratio falls below 1
    cfg = BellmanConfig(16.0, 0.05, (1.0,) * 6)
    pts = bellman.sample_interior(500, 16.0, 0.05, np.random.default_rng(0))
    worst = min(bellman.hessian_margin(cfg, p)["margin"] for p in pts.values())
    assert worst < 0


def test_derivative_bounds_are_finite():
    cfg = BellmanConfig(16.0, 0.05)
    rng = np.random.default_rng(1)
    x, y, r, s = bellman.sample_domain(6, 16.0, 0.05, rng)
    out = bellman.derivative_bounds_check(x, y, r, s, cfg, segments=32)
    assert all(np.isfinite(v) and v >= 0 for v in out.values())
