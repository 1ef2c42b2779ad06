"""Weights and their semigroup and ball characteristics.

A weight is a strictly positive vector over the points of a measure space.
The semigroup characteristic of ``w`` is

    sup_t max_x  T_t(w)(x) * T_t(1/w)(x),

and the ball characteristic on a discrete metric space is the supremum over
closed balls of ``avg(w) * avg(1/w)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InputError
from .semigroup import (CemeterySemigroup, Generator, MeasureSpace,
                        apply_semigroup, build_generator)


def as_weight(w, n: int | None = None) -> np.ndarray:
    """Validate a weight vector and return it as a float array."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InputError("a weight must be a non-empty vector of finite positive reals")
    if n is not None and w.size != n:
        raise DimensionMismatch(f"weight has {w.size} entries, space has {n} points")
    return w


def cutoff(w, n: float) -> np.ndarray:
    """Clamp ``w`` entrywise to ``[1/n, n]``."""
    if n < 1:
        raise InputError("cut-off level must be >= 1")
    return np.clip(as_weight(w), 1.0 / n, float(n))


def default_t_grid(points: int = 257, lo: float = 1e-6, hi: float = 1e6) -> np.ndarray:
    """Log grid on ``[lo, hi]`` with the exact endpoints ``0`` and ``inf`` added."""
    return np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), points), [np.inf]])


@dataclass(frozen=True)
class CharacteristicResult:
    """Outcome of a characteristic sweep over a time grid.

    Attributes
    ----------
    value : float
        Maximum of the per-time curve.
    argmax_t : float
        Grid time where it is attained (may be ``inf``).
    t : ndarray
    curve : ndarray
        ``max_x T_t(w) T_t(1/w)`` at each grid time.
    under_resolved : bool
        True when the maximum sits in an interior cell whose neighbours
        differ from it by more than ``1e-4`` relative.
    """

    value: float
    argmax_t: float
    t: np.ndarray
    curve: np.ndarray
    under_resolved: bool

    def to_dict(self) -> dict:
        return {"value": self.value,
                "argmax_t": _json_float(self.argmax_t),
                "under_resolved": self.under_resolved,
                "curve": [[_json_float(t), float(v)] for t, v in zip(self.t, self.curve)]}


def _json_float(x):
    x = float(x)
    return "inf" if np.isinf(x) else x


def _summarize(t, curve) -> CharacteristicResult:
    k = int(np.argmax(curve))
    value = float(curve[k])
    flag = False
    if 0 < k < len(curve) - 1:
        nb = max(abs(curve[k - 1] - value), abs(curve[k + 1] - value))
        flag = bool(nb > 1e-4 * abs(value))
    return CharacteristicResult(value, float(t[k]), np.asarray(t), np.asarray(curve), flag)


def q2_curve(gen: Generator, w, t_grid=None) -> tuple[np.ndarray, np.ndarray]:
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    w = as_weight(w, gen.n)
    Tw = apply_semigroup(gen, t, w)
    Twi = apply_semigroup(gen, t, 1.0 / w)
    return t, (Tw * Twi).max(axis=-1)


def q2_characteristic(gen: Generator, w, t_grid=None) -> CharacteristicResult:
    """Semigroup characteristic of ``w`` over a time grid (endpoints included)."""
    return _summarize(*q2_curve(gen, w, t_grid))


def q2_tilde_characteristic(gen: Generator, w, t_grid=None) -> CharacteristicResult:
    """Characteristic of the weight extended by ``1`` at the absorbing point.

    The semigroup is the conservative extension of ``gen``.
    """
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    w = as_weight(w, gen.n)
    cs = CemeterySemigroup(gen)
    ext = np.append(w, 1.0)
    Sw = cs.apply(t, ext)
    Swi = cs.apply(t, 1.0 / ext)
    return _summarize(t, (Sw * Swi).max(axis=-1))


def cutoff_monotonicity_check(gen: Generator, w, n: float, t_grid=None,
                              rtol: float = 1e-10) -> bool:
    """True iff the characteristic of ``cutoff(w, n)`` does not exceed that of ``w``."""
    _, full = q2_curve(gen, w, t_grid)
    _, cut = q2_curve(gen, cutoff(w, n), t_grid)
    return bool(cut.max() <= full.max() * (1 + rtol))


@dataclass(frozen=True)
class DiscreteMetricSpace:
    """Finite measure space with a metric.

    ``doubling`` is the largest observed ratio ``mu(B(x, 2r)) / mu(B(x, r))``
    over all centres and all distinct radii.
    """

    space: MeasureSpace
    dist: np.ndarray
    doubling: float = float("nan")

    @classmethod
    def build(cls, space: MeasureSpace, dist, rtol: float = 1e-9) -> "DiscreteMetricSpace":
        d = np.array(dist, dtype=float)
        n = space.n
        if d.shape != (n, n):
            raise DimensionMismatch(f"distance matrix {d.shape} vs {n} points")
        scale = max(1.0, float(np.abs(d).max(initial=0.0)))
        if np.any(np.abs(np.diag(d)) > rtol * scale) or np.any(d < -rtol * scale):
            raise InputError("distances must be non-negative with zero diagonal")
        if np.abs(d - d.T).max(initial=0.0) > rtol * scale:
            raise InputError("distance matrix is not symmetric")
        # d[i,k] <= d[i,j] + d[j,k] for all i, j, k
        via = (d[:, :, None] + d[None, :, :]).min(axis=1)
        if np.any(d > via + rtol * scale):
            raise InputError("triangle inequality fails")
        d.setflags(write=False)
        return cls(space, d, _doubling(space.mu, d))


def _doubling(mu, d) -> float:
    worst = 1.0
    for i in range(d.shape[0]):
        radii = np.unique(d[i][d[i] > 0])
        for r in radii:
            small = mu[d[i] <= r].sum()
            big = mu[d[i] <= 2 * r].sum()
            worst = max(worst, big / small)
    return float(worst)


def classical_characteristic(ms: DiscreteMetricSpace, w) -> float:
    """Supremum over closed balls of ``avg_B(w) * avg_B(1/w)``."""
    w = as_weight(w, ms.space.n)
    mu = ms.space.mu
    best = 1.0
    for i in range(mu.size):
        order = np.argsort(ms.dist[i], kind="stable")
        di = ms.dist[i][order]
        m = np.cumsum(mu[order])
        a = np.cumsum((mu * w)[order]) / m
        b = np.cumsum((mu / w)[order]) / m
        # a closed ball contains every point at exactly its radius
        last = np.r_[di[1:] != di[:-1], True]
        best = max(best, float((a * b)[last].max()))
    return best


def cycle_metric_space(n: int) -> DiscreteMetricSpace:
    """Cycle graph with counting measure and graph distance."""
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    return DiscreteMetricSpace.build(MeasureSpace.counting(n), np.minimum(gap, n - gap))


def cycle_laplacian(n: int, rate: float = 1.0) -> Generator:
    """Nearest-neighbour random walk generator on the cycle.

    Its heat kernel obeys two-sided Gaussian bounds at scales below the
    diameter, which makes it the reference diffusion on the cycle.
    """
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] -= rate
        A[i, (i - 1) % n] -= rate
        A[i, i] += 2 * rate
    return build_generator(MeasureSpace.counting(n), A)


def power_weight(ms: DiscreteMetricSpace, centre: int, exponent: float) -> np.ndarray:
    """``(1 + dist(x, centre)) ** exponent``."""
    return (1.0 + ms.dist[centre]) ** exponent
