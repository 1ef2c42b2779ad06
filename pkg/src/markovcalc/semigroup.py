"""Finite measure spaces, symmetric Markov generators and their semigroups.

A generator is a real matrix ``A`` acting on functions over ``n`` points with
masses ``mu``. It is self-adjoint for the inner product weighted by ``mu``,
has non-positive off-diagonal entries, and non-negative row sums (zero row
sums for a conservative, i.e. *markovian*, generator). The semigroup is
``T_t = exp(-t A)``, evaluated through the eigendecomposition of the
symmetric matrix ``D^{1/2} A D^{-1/2}`` with ``D = diag(mu)``.

The value ``t = numpy.inf`` is accepted everywhere and maps to the spectral
projection onto ``ker A``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (DimensionMismatch, InputError, NegativeSpectrum,
                     NotSelfAdjoint, PositiveOffDiagonal, RowSumViolation)

MARKOVIAN = "markovian"
SUBMARKOVIAN = "submarkovian"
DEFAULT_RTOL = 1e-9


@dataclass(frozen=True)
class MeasureSpace:
    """Finite set of points with strictly positive masses."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if mu.size < 1:
            raise InputError("a measure space needs at least one point")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise InputError("point masses must be finite and strictly positive")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    def inner(self, f, g):
        """Bilinear (unconjugated) pairing ``sum_i mu_i f_i g_i``."""
        return np.sum(self.mu * np.asarray(f) * np.asarray(g), axis=-1)

    @classmethod
    def counting(cls, n: int) -> "MeasureSpace":
        return cls(np.ones(n))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a generator, orthonormal for the ``mu`` inner product.

    Attributes
    ----------
    eigenvalues : ndarray, shape (n,)
        Ascending, clipped at zero.
    vectors : ndarray, shape (n, n)
        Column ``j`` is ``e_j`` with ``sum_i mu_i e_j[i] e_k[i] = delta_jk``.
    kernel_mask : ndarray of bool
        Marks eigenvalues treated as exactly zero.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    kernel_mask: np.ndarray
    mu: np.ndarray

    def coefficients(self, f):
        """Coordinates ``<f, e_j>_mu`` along the last axis of ``f``."""
        return (np.asarray(f) * self.mu) @ self.vectors

    def synthesize(self, coeffs):
        return np.asarray(coeffs) @ self.vectors.T


@dataclass(frozen=True)
class Generator:
    """Validated (sub)markovian generator; build it with :func:`build_generator`."""

    space: MeasureSpace
    A: np.ndarray
    kind: str = MARKOVIAN
    rtol: float = field(default=DEFAULT_RTOL, compare=False)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def mu(self) -> np.ndarray:
        return self.space.mu

    @cached_property
    def spectral(self) -> SpectralDecomposition:
        return _decompose(self.A, self.mu, self.rtol)

    @property
    def killing(self) -> np.ndarray:
        """Row sums of ``A``; zero for a markovian generator."""
        return self.A.sum(axis=1)

    def apply(self, f):
        """``A f`` along the last axis."""
        return np.asarray(f) @ self.A.T

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "A": self.A.tolist(), "kind": self.kind}


def _decompose(A, mu, rtol):
    sq = np.sqrt(mu)
    S = sq[:, None] * A / sq[None, :]
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
    if lam[0] < -rtol * scale * max(10, A.shape[0]):
        raise NegativeSpectrum(f"smallest eigenvalue {lam[0]:.3e} is negative")
    kernel = lam <= rtol * scale * max(10, A.shape[0])
    lam = np.where(kernel, 0.0, lam)
    E = U / sq[:, None]
    for arr in (lam, E, kernel):
        arr.setflags(write=False)
    return SpectralDecomposition(lam, E, kernel, mu)


def build_generator(space: MeasureSpace, A, kind: str = MARKOVIAN,
                    rtol: float = DEFAULT_RTOL) -> Generator:
    """Validate ``A`` against ``space`` and return a :class:`Generator`.

    Parameters
    ----------
    space : MeasureSpace
    A : array_like, shape (n, n)
    kind : {"markovian", "submarkovian"}
    rtol : float
        Relative tolerance of every invariant check.

    Raises
    ------
    DimensionMismatch
        Wrong shape or non-finite entries.
    NotSelfAdjoint, PositiveOffDiagonal, RowSumViolation, NegativeSpectrum
        The first violated invariant is raised; its ``violations`` attribute
        lists all of them.
    """
    if kind not in (MARKOVIAN, SUBMARKOVIAN):
        raise InputError(f"kind must be '{MARKOVIAN}' or '{SUBMARKOVIAN}', got {kind!r}")
    A = np.array(A, dtype=float)
    n = space.n
    if A.shape != (n, n):
        raise DimensionMismatch(f"generator has shape {A.shape}, space has {n} points")
    if not np.all(np.isfinite(A)):
        raise DimensionMismatch("generator has non-finite entries")
    mu = space.mu
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    tol = rtol * scale
    violations = []

    flux = mu[:, None] * A
    asym = np.abs(flux - flux.T).max(initial=0.0)
    if asym > tol * mu.max():
        violations.append(NotSelfAdjoint(
            f"mu_i A_ij differs from mu_j A_ji by {asym:.3e}"))
    off = A - np.diag(np.diag(A))
    if off.max(initial=0.0) > tol:
        i, j = np.unravel_index(np.argmax(off), off.shape)
        violations.append(PositiveOffDiagonal(
            f"off-diagonal entry A[{i},{j}] = {off[i, j]:.3e} > 0"))
    rows = A.sum(axis=1)
    if kind == MARKOVIAN and np.abs(rows).max(initial=0.0) > tol * n:
        violations.append(RowSumViolation(
            f"markovian generator has row sum {rows[np.argmax(np.abs(rows))]:.3e}"))
    if kind == SUBMARKOVIAN and rows.min(initial=0.0) < -tol * n:
        violations.append(RowSumViolation(
            f"submarkovian generator has negative row sum {rows.min():.3e}"))
    if not violations:
        try:
            _decompose(A, mu, rtol)
        except NegativeSpectrum as exc:
            violations.append(exc)
    if violations:
        first = violations[0]
        first.violations = violations
        if len(violations) > 1:
            first.args = ("; ".join(f"{type(v).__name__}: {v}" for v in violations),)
        raise first
    A.setflags(write=False)
    return Generator(space, A, kind, rtol)


def semigroup_at(gen: Generator, t: float) -> np.ndarray:
    """Matrix of ``exp(-t A)``; ``t = inf`` gives the projection onto ``ker A``."""
    sd = gen.spectral
    E = sd.vectors
    return (E * _decay(sd, t)) @ E.T * gen.mu[None, :]


def _decay(sd: SpectralDecomposition, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InputError("semigroup time must be non-negative")
    lam = sd.eigenvalues
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.exp(-np.multiply.outer(t, lam))
    # 0 * inf is nan: kernel modes stay, every other mode is gone at t = inf
    out = np.where(np.isinf(t)[..., None], sd.kernel_mask.astype(float), out)
    return np.where(sd.kernel_mask, 1.0, out)


def apply_semigroup(gen: Generator, t, f) -> np.ndarray:
    """``T_t f`` for a scalar or 1-d array of times.

    Returns shape ``(n,)`` for scalar ``t`` and ``(len(t), n)`` otherwise.
    """
    sd = gen.spectral
    c = sd.coefficients(f)
    return (_decay(sd, t) * c) @ sd.vectors.T


def apply_generator_semigroup(gen: Generator, t, f) -> np.ndarray:
    """``A T_t f`` with the same broadcasting rules as :func:`apply_semigroup`."""
    sd = gen.spectral
    c = sd.coefficients(f)
    return (_decay(sd, t) * sd.eigenvalues * c) @ sd.vectors.T


@dataclass(frozen=True)
class CemeterySemigroup:
    """Conservative extension of a submarkovian semigroup by one absorbing point.

    Functions over the extended space are vectors of length ``n + 1`` whose
    last entry is the value at the absorbing point.
    """

    base: Generator

    def apply(self, t: float, f_ext) -> np.ndarray:
        f_ext = np.asarray(f_ext)
        n = self.base.n
        if f_ext.shape[-1] != n + 1:
            raise DimensionMismatch(
                f"extended function needs {n + 1} entries, got {f_ext.shape[-1]}")
        inner, at_inf = f_ext[..., :n], f_ext[..., n:]
        mass = apply_semigroup(self.base, t, np.ones(n))
        moved = apply_semigroup(self.base, t, inner) + at_inf * (1.0 - mass)
        return np.concatenate([moved, np.broadcast_to(at_inf, moved.shape[:-1] + (1,))],
                              axis=-1)

    def matrix(self, t: float) -> np.ndarray:
        n = self.base.n
        M = np.zeros((n + 1, n + 1))
        T = semigroup_at(self.base, t)
        M[:n, :n] = T
        M[:n, n] = 1.0 - T.sum(axis=1)
        M[n, n] = 1.0
        return M


def cemetery_apply(cs: CemeterySemigroup, t: float, f_prime) -> np.ndarray:
    return cs.apply(t, f_prime)


def check_pointwise_cs(T, f, g, rtol: float = 1e-10) -> bool:
    """Pointwise Cauchy-Schwarz test ``|T(fg)|^2 <= T(|f|^2) T(|g|^2)``."""
    T = np.asarray(T, dtype=float)
    f = np.asarray(f)
    g = np.asarray(g)
    lhs = np.abs(T @ (f * g)) ** 2
    rhs = (T @ np.abs(f) ** 2) * (T @ np.abs(g) ** 2)
    scale = max(1.0, float(rhs.max(initial=0.0)))
    return bool(np.all(lhs <= rhs * (1 + rtol) + rtol * scale))


def two_point_generator() -> Generator:
    """The two-point generator ``[[1, -1], [-1, 1]]`` with counting measure."""
    return build_generator(MeasureSpace.counting(2), [[1.0, -1.0], [-1.0, 1.0]])


def random_generator(n: int, rng: np.random.Generator, kind: str = MARKOVIAN,
                     density: float = 0.7, killing: float = 1.0,
                     uniform_mass: bool = False) -> Generator:
    """Random generator valid by construction.

    Symmetric non-negative couplings ``c_ij`` give ``A_ij = -c_ij / mu_i``;
    the diagonal restores the row sums, plus a non-negative killing rate
    when ``kind`` is submarkovian.
    """
    mu = np.ones(n) if uniform_mass else rng.uniform(0.2, 2.0, n)
    c = rng.exponential(1.0, (n, n)) * (rng.random((n, n)) < density)
    c = np.triu(c, 1)
    c = c + c.T
    if n > 1:
        # a path keeps the chain connected so ker A is one-dimensional
        idx = np.arange(n - 1)
        c[idx, idx + 1] = c[idx + 1, idx] = np.maximum(c[idx, idx + 1], 0.1)
    A = -c / mu[:, None]
    kill = rng.exponential(killing, n) if kind == SUBMARKOVIAN else np.zeros(n)
    A[np.diag_indices(n)] = (c.sum(axis=1) + kill) / mu
    return build_generator(MeasureSpace(mu), A, kind)


PathLike = Union[str, Path]


def generator_from_dict(doc: dict) -> Generator:
    try:
        mu, A = doc["mu"], doc["A"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"generator document needs 'mu' and 'A': {exc}") from None
    return build_generator(MeasureSpace(mu), A, doc.get("kind", MARKOVIAN))


def load_generator(path: PathLike) -> Generator:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None
    return generator_from_dict(doc)


def save_matrix_csv(M, path: PathLike) -> None:
    np.savetxt(path, np.asarray(M), delimiter=",", fmt="%.17g")
