import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from markovcalc.errors import (DimensionMismatch, InputError, NegativeSpectrum, NotSelfAdjoint,
                               PositiveOffDiagonal, RowSumViolation)
from markovcalc.semigroup import (SUBMARKOVIAN, CemeterySemigroup, MeasureSpace,
                                  apply_generator_semigroup, apply_semigroup, build_generator,
                                  check_pointwise_cs, load_generator, random_generator,
                                  semigroup_at, two_point_generator)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 8)


def test_two_point_closed_form():
    gen = two_point_generator()
    t = 0.7
    e = np.exp(-2 * t)
    expected = 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]])
    assert np.allclose(semigroup_at(gen, t), expected, atol=1e-15)
    assert np.allclose(semigroup_at(gen, np.inf), 0.5, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seeds, dims, st.sampled_from(["markovian", "submarkovian"]),
       st.floats(1e-3, 20.0))
def test_matches_matrix_exponential(seed, n, kind, t):
    gen = random_generator(n, np.random.default_rng(seed), kind)
    assert np.allclose(semigroup_at(gen, t), expm(-t * gen.A), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(seeds, dims, st.sampled_from(["markovian", "submarkovian"]),
       st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_semigroup_law_and_positivity(seed, n, kind, s, t):
    gen = random_generator(n, np.random.default_rng(seed), kind)
    Ts, Tt, Tst = (semigroup_at(gen, x) for x in (s, t, s + t))
    assert np.allclose(Ts @ Tt, Tst, atol=1e-10)
    assert Tt.min() >= -1e-10
    rows = Tt.sum(axis=1)
    if kind == SUBMARKOVIAN:
        assert np.all(rows <= 1 + 1e-10)
    else:
        assert np.allclose(rows, 1.0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds, dims, st.floats(0.0, 10.0))
def test_self_adjoint_and_contractive(seed, n, t):
    rng = np.random.default_rng(seed)
    gen = random_generator(n, rng, SUBMARKOVIAN)
    mu = gen.mu
    T = semigroup_at(gen, t)
    f, g = rng.standard_normal((2, n))
    assert np.isclose(np.sum(mu * (T @ f) * g), np.sum(mu * f * (T @ g)), atol=1e-10)
    assert np.sum(mu * (T @ f) ** 2) <= np.sum(mu * f ** 2) * (1 + 1e-10)
    h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert check_pointwise_cs(T, f, h)


@settings(max_examples=30, deadline=None)
@given(seeds, dims)
def test_vectorised_application(seed, n):
    rng = np.random.default_rng(seed)
    gen = random_generator(n, rng)
    f = rng.standard_normal(n)
    ts = np.array([0.0, 0.3, 2.0])
    batch = apply_semigroup(gen, ts, f)
    for k, t in enumerate(ts):
        assert np.allclose(batch[k], semigroup_at(gen, t) @ f, atol=1e-10)
    assert np.allclose(apply_generator_semigroup(gen, 0.3, f),
                       gen.A @ semigroup_at(gen, 0.3) @ f, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 6), st.floats(0.0, 5.0))
def test_cemetery_is_conservative(seed, n, t):
    rng = np.random.default_rng(seed)
    cs = CemeterySemigroup(random_generator(n, rng, SUBMARKOVIAN))
    M = cs.matrix(t)
    assert np.allclose(M.sum(axis=1), 1.0, atol=1e-10)
    assert M.min() >= -1e-10
    f = rng.standard_normal(n + 1)
    assert np.allclose(cs.apply(t, f), M @ f, atol=1e-10)


def test_cemetery_shape_check():
    cs = CemeterySemigroup(random_generator(3, np.random.default_rng(0), SUBMARKOVIAN))
    with pytest.raises(DimensionMismatch):
        cs.apply(1.0, np.ones(3))


@pytest.mark.parametrize("A, kind, err", [
    ([[1.0, 1.0], [1.0, 1.0]], "markovian", PositiveOffDiagonal),
    ([[1.0, -0.5], [-1.0, 1.0]], "markovian", NotSelfAdjoint),
    ([[2.0, -1.0], [-1.0, 1.0]], "markovian", RowSumViolation),
    ([[0.5, -1.0], [-1.0, 0.5]], "submarkovian", RowSumViolation),
])
def test_invalid_generators(A, kind, err):
    with pytest.raises(err):
        build_generator(MeasureSpace.counting(2), A, kind)


def test_invalid_measure():
    with pytest.raises(InputError):
        MeasureSpace([1.0, 0.0])


def test_negative_spectrum_is_an_input_error():
    assert issubclass(NegativeSpectrum, InputError)


def test_load_generator(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(two_point_generator().to_dict()))
    assert np.array_equal(load_generator(p).A, two_point_generator().A)
    p.write_text("{not json")
    with pytest.raises(InputError):
        load_generator(p)
