"""Weighted norms of the complex-time two-point semigroup and its tensor powers.

On ``{a, b}`` with generator ``G = [[1, -1], [-1, 1]]``, ``exp(-z G)`` is
``1/2 [[1 + g, 1 - g], [1 - g, 1 + g]]`` with ``g = exp(-2 z)``. With the
weight ``(1, v^2)`` its norm exceeds one by a multiple of ``(v - 1)^2`` that
blows up as ``arg z`` approaches ``pi/2``. Tensor powers compound that excess
while the semigroup characteristic stays bounded; the failure experiment
measures how fast the compounded norm grows in ``tan(arg z)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import FitUnstable, GammaOnUnitCircle, InputError, NumericalOverflow
from .multipliers import apply_multiplier, exp_multiplier, weighted_operator_norm
from .semigroup import MeasureSpace, build_generator, two_point_generator
from .weights import q2_characteristic

G2 = np.array([[1.0, -1.0], [-1.0, 1.0]])


@dataclass(frozen=True)
class TwoPointConfig:
    """Weight ``(1, v^2)`` and complex time ``z`` with ``Re z > 0``."""

    v: float
    z: complex

    def __post_init__(self):
        if not self.v > 0:
            raise InputError("v must be positive")
        if not complex(self.z).real > 0:
            raise InputError("z must have positive real part")

    @property
    def gamma(self) -> complex:
        return complex(np.exp(-2 * complex(self.z)))


def two_point_gram(v, z):
    """Entries ``(alpha, delta, beta)`` of ``S* S`` for the conjugated two-point operator.

    ``S`` is ``exp(-z G)`` conjugated by ``diag(1, v)``; ``alpha`` and ``delta`` are
    the diagonal entries and ``beta`` the off-diagonal one.
    """
    v = np.asarray(v, dtype=float)
    g = np.exp(-2 * np.asarray(z, dtype=complex))
    p = np.abs(1 + g) ** 2
    m = np.abs(1 - g) ** 2
    alpha = (p + v ** 2 * m) / 4
    delta = (p + m / v ** 2) / 4
    beta = ((v + 1 / v) * (1 - np.abs(g) ** 2) + 2j * (v - 1 / v) * g.imag) / 4
    return alpha, delta, beta


def two_point_weighted_norm_exact(v, z):
    """Norm of ``exp(-z G)`` on ``L2`` with weight ``(1, v^2)``, in closed form.

    Square root of the top eigenvalue ``(alpha + delta + sqrt((alpha - delta)^2
    + 4|beta|^2)) / 2`` of the Gram matrix. Vectorised over ``v`` and ``z``.
    """
    if isinstance(v, TwoPointConfig):
        v, z = v.v, v.z
    a, d, b = two_point_gram(v, z)
    top = 0.5 * (a + d + np.sqrt((a - d) ** 2 + 4 * np.abs(b) ** 2))
    return np.sqrt(top)


def two_point_norm_dense(v: float, z: complex) -> float:
    """Same norm from the functional calculus and a weighted SVD."""
    M = apply_multiplier(two_point_generator(), exp_multiplier(z))
    return weighted_operator_norm(M, [1.0, v * v]).value


def d_gamma(g):
    """``(|1-g|^4 + (1-|g|^2)^2 + 4 Im(g)^2) / (1-|g|^2)^2`` for ``|g| < 1``."""
    g = np.asarray(g, dtype=complex)
    if np.any(np.abs(g) >= 1):
        raise GammaOnUnitCircle("d_gamma needs |g| < 1")
    q = 1 - np.abs(g) ** 2
    return (np.abs(1 - g) ** 4 + q ** 2 + 4 * g.imag ** 2) / q ** 2


def heart_coefficient(g):
    """Second-order coefficient ``(4|1-g|^2 + d_gamma / 2) / 16`` of the norm in ``v - 1``."""
    return (4 * np.abs(1 - np.asarray(g)) ** 2 + 0.5 * d_gamma(g)) / 16


def exact_quadratic_coefficient(g):
    """Second-order coefficient obtained by expanding the closed-form norm directly.

    ``(4|1-g|^2 + 2 (1-|g|^2) d_gamma) / 16``. It differs from
    :func:`heart_coefficient` in the factor ``4 (1-|g|^2)`` on ``d_gamma``,
    which matters as ``g -> 1``: for ``z = r e^{i phi}`` it tends to
    ``r / (2 cos phi)`` rather than to ``(1 + tan^2 phi) / 32``.
    """
    g = np.asarray(g, dtype=complex)
    return (4 * np.abs(1 - g) ** 2 + 2 * (1 - np.abs(g) ** 2) * d_gamma(g)) / 16


def asymptotic_check(phi: float, r: float, eps=(4e-3, 2e-3, 1e-3)) -> dict:
    """Quadratic coefficient of ``norm - 1`` in ``eps = v - 1``, measured and predicted.

    ``(norm - 1) / eps^2`` is linear in ``eps`` to leading order, so one
    Richardson step per halving removes the linear term. The sweep must
    halve at each step.

    Raises
    ------
    FitUnstable
        If successive Richardson estimates disagree by more than 1%.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.size < 2 or not np.allclose(eps[1:] / eps[:-1], 0.5):
        raise InputError("the eps sweep must halve at each step")
    z = r * np.exp(1j * phi)
    g = np.exp(-2 * z)
    raw = (two_point_weighted_norm_exact(1 + eps, z) - 1) / eps ** 2
    rich = 2 * raw[1:] - raw[:-1]
    if rich.size > 1 and abs(rich[-1] - rich[-2]) > 1e-2 * abs(rich[-1]):
        raise FitUnstable(f"Richardson estimates {rich[-2]:.6g} and {rich[-1]:.6g} disagree")
    predicted = float(heart_coefficient(g))
    exact = float(exact_quadratic_coefficient(g))
    measured = float(rich[-1])
    return {"phi": phi, "r": r, "raw": float(raw[-1]), "measured": measured,
            "predicted": predicted, "small_r_limit": float((1 + np.tan(phi) ** 2) / 32),
            "deviation": abs(measured - predicted) / predicted,
            "exact_expansion": exact, "exact_deviation": abs(measured - exact) / exact}


def two_point_q2(u: float, v: float) -> float:
    """Semigroup characteristic of the weight ``(u, v)`` on the two-point space."""
    return 0.25 * (2 + u / v + v / u)


# --------------------------------------------------------------------------
# tensor powers

@dataclass(frozen=True)
class TensorSemigroup:
    """``N``-fold tensor power of the two-point semigroup with weights ``(1, (1+eps_k)^2)``.

    Norms and characteristics factor over the tensor legs, so nothing of
    size ``2^N`` is formed.
    """

    eps: tuple

    def __post_init__(self):
        e = tuple(float(x) for x in self.eps)
        if not e or any(x < 0 for x in e):
            raise InputError("need at least one factor and eps_k >= 0")
        object.__setattr__(self, "eps", e)

    @classmethod
    def uniform(cls, N: int, eps: float) -> "TensorSemigroup":
        return cls((eps,) * N)

    @property
    def N(self) -> int:
        return len(self.eps)

    def __add__(self, other: "TensorSemigroup") -> "TensorSemigroup":
        return TensorSemigroup(self.eps + other.eps)


def log_tensor_norm(ts: TensorSemigroup, z: complex) -> float:
    v = 1 + np.array(ts.eps)
    return float(np.sum(np.log(two_point_weighted_norm_exact(v, z))))


def tensor_norm(ts: TensorSemigroup, z: complex) -> float:
    """Weighted norm of ``exp(-z G) ⊗ ... ⊗ exp(-z G)``: the product of the leg norms."""
    val = log_tensor_norm(ts, z)
    if val > 700:
        raise NumericalOverflow("norm overflows a float; use log_tensor_norm")
    return float(np.exp(val))


def log_tensor_q2(ts: TensorSemigroup) -> float:
    v = 1 + np.array(ts.eps)
    return float(np.sum(np.log(two_point_q2(1.0, v * v))))


def tensor_q2(ts: TensorSemigroup) -> float:
    """Characteristic of the product weight: ``prod (2 + (1+eps_k)^2 + (1+eps_k)^-2) / 4``."""
    return float(np.exp(log_tensor_q2(ts)))


def dense_tensor_generator(N: int):
    """Generator ``sum_k I ⊗ .. G .. ⊗ I`` on ``2^N`` points with counting measure."""
    I2 = np.eye(2)
    A = np.zeros((2 ** N, 2 ** N))
    for k in range(N):
        A += reduce(np.kron, [G2 if j == k else I2 for j in range(N)])
    return build_generator(MeasureSpace.counting(2 ** N), A)


def dense_tensor_weight(ts: TensorSemigroup) -> np.ndarray:
    return reduce(np.kron, [np.array([1.0, (1 + e) ** 2]) for e in ts.eps])


def dense_tensor_norm(ts: TensorSemigroup, z: complex) -> float:
    """Weighted SVD of the assembled ``2^N`` matrix; only sensible for small ``N``."""
    M = apply_multiplier(dense_tensor_generator(ts.N), exp_multiplier(z))
    return weighted_operator_norm(M, dense_tensor_weight(ts)).value


def dense_tensor_q2(ts: TensorSemigroup) -> float:
    """Characteristic computed on the assembled ``2^N``-point semigroup."""
    return q2_characteristic(dense_tensor_generator(ts.N), dense_tensor_weight(ts)).value


def quadratic_q2_constant(eps_max: float = 1.0, points: int = 10_001) -> float:
    """``sup (Q(eps) - 1) / eps^2`` over ``(0, eps_max]`` for the weight ``(1, (1+eps)^2)``.

    ``Q(eps) - 1 = eps^2 (2 + eps)^2 / (4 (1 + eps)^2)``, so the ratio decreases
    from its limit ``1`` at ``eps -> 0``.
    """
    e = np.linspace(eps_max / points, eps_max, points)
    ratio = (2 + e) ** 2 / (4 * (1 + e) ** 2)
    return float(max(ratio.max(), 1.0))


@dataclass(frozen=True)
class DirectSumFamily:
    """Blocks ``N = 1 .. N_max`` with masses ``2^(-2N)`` per point (``2^N`` points each).

    The full family over all ``N`` is a probability space; ``total_mass``
    reports the truncated sum.
    """

    N_max: int

    def block_mass(self, N: int) -> float:
        return 2.0 ** (-2 * N) * 2.0 ** N

    @property
    def total_mass(self) -> float:
        return float(sum(self.block_mass(N) for N in range(1, self.N_max + 1)))

    def q2_bound(self) -> float:
        """Uniform bound ``e^C`` on the characteristic of every ``eps_k = 1/sqrt(N)`` block."""
        return float(np.exp(quadratic_q2_constant()))


# --------------------------------------------------------------------------
# the failure experiment

def factor_count(tan2: float) -> int:
    """Smallest integer ``N >= tan^2(phi)``, tolerant of rounding in ``tan2``."""
    return int(np.ceil(tan2 - 1e-9 * max(1.0, tan2)))


def _max_residual(y, X):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(np.abs(y - X @ coef).max()), coef


def hormander_failure_experiment(tan2_grid=(4, 16, 64, 256), r: float = 1e-3,
                                 s_max: int = 16, ratio_min: float = 10.0,
                                 r2_min: float = 0.999) -> dict:
    """Norm growth of ``exp(-z A)`` along ``z = r e^{i phi}`` against the characteristic.

    For each ``phi`` the block has ``N = ceil(tan^2 phi)`` legs with
    ``eps_k = 1/sqrt(N)``. The verdict combines three checks:

    * ``uniform_Q``: every block characteristic is at most ``e^C``.
    * ``exponential``: ``log norm`` is linear in ``tan^2 phi`` with slope in
      ``[1/64, 1/16]`` and ``R^2 >= r2_min``.
    * ``not_polynomial``: for each ``s <= s_max`` the best fit
      ``log norm = a + s log tan phi`` misses by at least ``ratio_min`` times
      the linear model's worst residual.

    ``r_warning`` is raised when the fitted slope is more than 50% away from
    ``1/32``, the small-``r`` limit; the ``o(r)`` terms then dominate.

    Returns
    -------
    dict
        ``rows`` (one per ``phi``) and ``verdict``.
    """
    tan2 = np.asarray(tan2_grid, dtype=float)
    if np.any(tan2 <= 0):
        raise InputError("tan^2(phi) must be positive")
    phi = np.arctan(np.sqrt(tan2))
    rows = []
    C = quadratic_q2_constant()
    for t2, p in zip(tan2, phi):
        N = factor_count(t2)
        ts = TensorSemigroup.uniform(N, 1 / np.sqrt(N))
        z = r * np.exp(1j * p)
        rows.append({"phi": float(p), "tan2": float(t2), "N": N,
                     "log_norm": log_tensor_norm(ts, z), "q2": tensor_q2(ts)})
    y = np.array([row["log_norm"] for row in rows])
    uniform_q = bool(all(row["q2"] <= np.exp(C) * (1 + 1e-12) for row in rows))

    verdict = {"uniform_Q": float(np.exp(C)), "uniform_Q_holds": uniform_q, "r": r,
               "s_max": s_max}
    if len(rows) >= 2:
        X = np.column_stack([np.ones_like(tan2), tan2])
        res_exp, coef = _max_residual(y, X)
        ss = np.sum((y - y.mean()) ** 2)
        r2 = 1 - np.sum((y - X @ coef) ** 2) / ss if ss > 0 else 1.0
        logtan = 0.5 * np.log(tan2)
        res_poly = {}
        for s in range(s_max + 1):
            res_poly[s], _ = _max_residual(y - s * logtan, np.ones((len(y), 1)))
        worst_ratio = min(v / max(res_exp, 1e-300) for v in res_poly.values())
        slope = float(coef[1])
        exponential = bool(1 / 64 <= slope <= 1 / 16 and r2 >= r2_min)
        not_poly = bool(worst_ratio >= ratio_min)
        for row, ye, yp in zip(rows, y - X @ coef, y):
            row["residual_exp"] = float(ye)
            best = min(res_poly, key=res_poly.get)
            row["residual_poly_best"] = float(yp - best * 0.5 * np.log(row["tan2"])
                                              - np.mean(y - best * logtan))
        verdict.update({"fitted_c": slope, "intercept": float(coef[0]), "r2": float(r2),
                        "max_residual_exp": res_exp,
                        "max_residual_poly": {str(k): v for k, v in res_poly.items()},
                        "min_residual_ratio": float(worst_ratio),
                        "exponential": exponential, "not_polynomial": not_poly,
                        "hormander_fails": bool(uniform_q and exponential and not_poly),
                        "r_warning": bool(abs(slope - 1 / 32) > 0.5 / 32)})
    else:
        c = float(y[0] / tan2[0])
        verdict.update({"fitted_c": c, "hormander_fails": False,
                        "r_warning": bool(abs(c - 1 / 32) > 0.5 / 32),
                        "note": "a single angle cannot separate growth rates"})
    return {"rows": rows, "verdict": verdict}


def rows_to_csv(rows) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    cols = list(rows[0].keys())
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in cols})
    return buf.getvalue()


def verdict_json(report: dict) -> str:
    return json.dumps(report["verdict"], indent=2, sort_keys=True)
