"""Spectral multipliers of finite generators and the norms used to control them.

On a finite space ``m(A) = sum_j m(lambda_j) e_j <e_j, .>_mu``. Alongside
that substitution the module computes weighted operator norms, dyadic Besov
norms of boundary traces, the Hörmander-class norm for integer smoothness,
and the ``L1`` norm of the kernel whose Fourier transform is
``1 / (Gamma(1 - i t) cosh(alpha t))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np
from scipy import fft
from scipy.special import loggamma

from .errors import (GammaEvalUnstable, GridTooCoarse, InputError,
                     MultiplierUndefinedAtEigenvalue, TailNotConverged)
from .semigroup import Generator
from .weights import as_weight


# --------------------------------------------------------------------------
# multipliers

@dataclass(frozen=True)
class Multiplier:
    """A scalar function of the spectral variable.

    Parameters
    ----------
    func : callable
        Vectorised ``lambda -> m(lambda)``.
    name : str
    params : dict
        Parameters of the family, for reports.
    derivative : callable, optional
        ``(k, lambda) -> m^(k)(lambda)`` in closed form. Needed by
        :func:`hormander_norm`.
    """

    func: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict)
    derivative: Callable | None = None

    def __call__(self, lam):
        return self.func(np.asarray(lam))

    def __mul__(self, other: "Multiplier") -> "Multiplier":
        return Multiplier(lambda lam: self.func(lam) * other.func(lam),
                          f"({self.name})*({other.name})",
                          {"left": self.params, "right": other.params})


def constant_multiplier(c: complex = 1.0) -> Multiplier:
    return Multiplier(lambda lam: np.full(np.shape(lam), c, dtype=complex), "constant",
                      {"c": c}, lambda k, lam: np.full(np.shape(lam), c if k == 0 else 0,
                                                       dtype=complex))


def exp_multiplier(z: complex) -> Multiplier:
    """``m(lambda) = exp(-lambda z)``; ``exp_multiplier(t)`` is the semigroup at ``t``."""
    z = complex(z)
    return Multiplier(lambda lam: np.exp(-lam * z), "exp", {"z": [z.real, z.imag]},
                      lambda k, lam: (-z) ** k * np.exp(-lam * z))


def regularized_semigroup(t: float, J: float, eps: float) -> Multiplier:
    """``m_t(lambda) = (1 + lambda)^(-J-eps) exp(-t lambda)`` (principal branch)."""
    p = J + eps
    return Multiplier(lambda lam: (1 + lam + 0j) ** (-p) * np.exp(-t * lam),
                      "regularized_semigroup", {"t": t, "J": J, "eps": eps})


def grid_multiplier(lam_grid, values) -> Multiplier:
    """Multiplier known on a grid of real points, linearly interpolated.

    Outside the grid it is undefined (``nan``).
    """
    lg = np.asarray(lam_grid, dtype=float)
    vals = np.asarray(values, dtype=complex)
    order = np.argsort(lg)
    lg, vals = lg[order], vals[order]

    def f(lam):
        lam = np.real(lam)
        out = np.interp(lam, lg, vals.real) + 1j * np.interp(lam, lg, vals.imag)
        return np.where((lam < lg[0]) | (lam > lg[-1]), np.nan, out)

    return Multiplier(f, "grid", {"points": int(lg.size)})


def apply_multiplier(gen: Generator, m: Multiplier) -> np.ndarray:
    """Matrix of ``m(A)`` by spectral substitution.

    Raises
    ------
    MultiplierUndefinedAtEigenvalue
        If ``m`` is not finite at some eigenvalue.
    """
    sd = gen.spectral
    vals = np.asarray(m(sd.eigenvalues), dtype=complex)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise MultiplierUndefinedAtEigenvalue(
            f"{m.name} is not finite at eigenvalue {sd.eigenvalues[bad][0]:.6g}")
    E = sd.vectors
    M = (E * vals) @ E.T * gen.mu[None, :]
    return M.real if np.all(vals.imag == 0) else M


# --------------------------------------------------------------------------
# weighted operator norms

@dataclass(frozen=True)
class WeightedNormResult:
    """Norm of a matrix on ``L2(w mu)``.

    ``vector`` is a unit vector of ``L2(w mu)`` realising the norm.
    """

    value: float
    vector: np.ndarray
    method: str = "svd"


def weighted_operator_norm(M, w, mu=None) -> WeightedNormResult:
    """Operator norm of ``M`` on ``L2(w mu)``.

    Conjugating by ``diag(sqrt(w mu))`` turns the weighted norm into a plain
    spectral norm, taken from the singular value decomposition.
    """
    M = np.asarray(M)
    n = M.shape[0]
    w = as_weight(w, n)
    mu = np.ones(n) if mu is None else as_weight(mu, n)
    d = np.sqrt(w * mu)
    K = d[:, None] * M / d[None, :]
    _, s, vh = np.linalg.svd(K)
    x = vh[0].conj() / d
    x = x / np.sqrt(np.sum(np.abs(x) ** 2 * w * mu))
    return WeightedNormResult(float(s[0]), x, "svd")


def weighted_norm_of(M, x, w, mu=None) -> float:
    """``||M x|| / ||x||`` in ``L2(w mu)``."""
    M = np.asarray(M)
    x = np.asarray(x)
    mu = np.ones(x.size) if mu is None else np.asarray(mu, dtype=float)
    num = np.sum(np.abs(M @ x) ** 2 * w * mu)
    den = np.sum(np.abs(x) ** 2 * w * mu)
    return float(np.sqrt(num / den))


def regularized_semigroup_norms(gen: Generator, w, J: float, t_grid) -> np.ndarray:
    """``||(1 + A)^(-J) exp(-t A)||`` on ``L2(w mu)`` along ``t_grid``."""
    out = []
    for t in np.asarray(t_grid, dtype=float):
        M = apply_multiplier(gen, regularized_semigroup(t, J, 0.0))
        out.append(weighted_operator_norm(M, w, gen.mu).value)
    return np.array(out)


# --------------------------------------------------------------------------
# dyadic partition and Besov norms

def smooth_step(x):
    """C-infinity step: ``0`` for ``x <= 0``, ``1`` for ``x >= 1``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def low_pass(xi):
    """Smooth cut-off: ``1`` on ``|xi| <= 1/2``, ``0`` on ``|xi| >= 1``."""
    return 1.0 - smooth_step(2.0 * np.abs(xi) - 1.0)


def partition_function(k: int, xi):
    """Dyadic piece ``phi_k`` at frequencies ``xi``.

    ``phi_0`` is :func:`low_pass`. For ``k >= 1``, ``phi_k(xi) = phi_1(2^(1-k) xi)``
    with ``phi_1(u) = low_pass(u / 2) - low_pass(u)`` on ``u > 0``, so that
    ``phi_k`` lives on ``[2^(k-2), 2^k]``; ``phi_{-k}(xi) = phi_k(-xi)``.
    The sum telescopes to one.
    """
    xi = np.asarray(xi, dtype=float)
    if k == 0:
        return low_pass(xi)
    u = np.sign(k) * xi * 2.0 ** (1 - abs(k))
    return np.where(u > 0, low_pass(u / 2) - low_pass(u), 0.0)


def _band(k):
    if k == 0:
        return -1.0, 1.0
    if k > 0:
        return 2.0 ** (k - 2), 2.0 ** k
    return -(2.0 ** -k), -(2.0 ** (-k - 2))


@dataclass(frozen=True)
class BesovGrid:
    """Uniform sample grid on the line together with the dyadic partition.

    Frequencies are angular: a sample ``exp(i xi x)`` sits at ``xi``.
    """

    x: np.ndarray
    n_max: int = 40

    @classmethod
    def uniform(cls, lo: float, hi: float, dx: float, n_max: int = 40) -> "BesovGrid":
        return cls(np.arange(lo, hi, dx), n_max)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def nyquist(self) -> float:
        return float(np.pi / self.dx)

    def phi(self, k: int, xi):
        return partition_function(k, xi)

    def partition_error(self, xi) -> float:
        """``max |sum_k phi_k(xi) - 1|`` over the given frequencies."""
        total = sum(partition_function(k, xi) for k in range(-self.n_max, self.n_max + 1))
        return float(np.abs(total - 1.0).max())


@dataclass(frozen=True)
class BesovResult:
    """Truncated dyadic sum, its tail estimate and the per-level sup norms.

    ``terms[k]`` is ``||f * phi_k^vee||_inf``; ``value`` already includes
    ``tail``.
    """

    value: float
    tail: float
    J: float
    terms: dict
    levels: int

    def weighted(self) -> dict:
        return {k: 2.0 ** (self.J * abs(k)) * v for k, v in self.terms.items()}


def besov_levels(f, grid: BesovGrid, levels: int | None = None, oversample: int = 8,
                 periodic: bool = False, alias_tol: float = 1e-6) -> dict:
    """Sup norms of the frequency-localised pieces ``f * phi_k^vee``, ``|k| <= levels``.

    Each piece is band-limited, so it is resynthesised from its band alone
    on a grid ``oversample`` times finer than the band requires. A
    non-periodic ``f`` is first extended evenly, and the sup is taken over
    the original samples only.

    Raises
    ------
    GridTooCoarse
        If the spectrum carries more than ``alias_tol`` of its peak in the
        top eighth below the Nyquist frequency.
    """
    f = np.asarray(f, dtype=complex)
    levels = grid.n_max if levels is None else int(levels)
    n_orig = f.size
    g = f if periodic else np.concatenate([f, f[::-1]])
    N = g.size
    F = fft.fft(g, workers=-1)
    xi = 2 * np.pi * fft.fftfreq(N, d=grid.dx)
    peak = np.abs(F).max()
    if peak > 0 and np.abs(F[np.abs(xi) > 0.875 * grid.nyquist]).max(initial=0.0) > alias_tol * peak:
        raise GridTooCoarse("spectrum reaches the Nyquist frequency; refine the grid")
    order = np.argsort(xi)
    xs, Fs = xi[order], F[order]
    out = {}
    for k in range(-levels, levels + 1):
        lo, hi = _band(k)
        a = np.searchsorted(xs, lo)
        b = np.searchsorted(xs, hi, side="right")
        if b <= a or peak == 0:
            out[k] = 0.0
            continue
        G = Fs[a:b] * partition_function(k, xs[a:b])
        # shifting the band to baseband only changes a unimodular phase
        P = int(2 ** np.ceil(np.log2(max(oversample * (b - a), 64))))
        vals = np.abs(fft.ifft(G, n=P, workers=-1)) * P / N
        keep = np.arange(P) < n_orig / N * P
        out[k] = float(vals[keep].max())
    return out


def _side_tail(weighted, ks, rel_floor):
    """Geometric extrapolation beyond the last level of one frequency side."""
    last = weighted[ks[-1]]
    if last <= rel_floor:
        return 0.0
    q = (weighted[ks[-1]] / weighted[ks[-3]]) ** 0.5 if weighted[ks[-3]] > 0 else np.inf
    if not q < 0.999:
        raise TailNotConverged(f"weighted dyadic terms do not decay (ratio {q:.4f})")
    return last * q / (1 - q)


def besov_norm(f, J: float, grid: BesovGrid, levels: int | None = None,
               oversample: int = 8, periodic: bool = False) -> BesovResult:
    """``sum_k 2^(J|k|) ||f * phi_k^vee||_inf`` with a geometric tail estimate.

    Levels ``|k| <= levels`` are computed; the remainder on each side is
    extrapolated from the decay ratio of the last three levels.

    Raises
    ------
    GridTooCoarse, TailNotConverged
    """
    levels = grid.n_max if levels is None else int(levels)
    terms = besov_levels(f, grid, levels, oversample, periodic)
    res = BesovResult(0.0, 0.0, J, terms, levels)
    w = res.weighted()
    total = sum(w.values())
    # sides carrying less than this are rounding and leakage, not signal
    floor = 1e-8 * max(total, 1e-300)
    tail = 0.0
    if levels >= 3:
        tail = (_side_tail(w, list(range(1, levels + 1)), floor)
                + _side_tail(w, list(range(-1, -levels - 1, -1)), floor))
    return BesovResult(total + tail, tail, J, terms, levels)


def regularized_trace(t: float, J: float, eps: float, sign: int = 1,
                      extra: int = 6, lo: float = -12.0):
    """Boundary trace ``lambda -> m_t(sign * i * e^lambda)`` on a grid fine enough for ``t``.

    The trace oscillates at frequency about ``t e^lambda``. The grid resolves
    frequencies up to ``2^(top + 4)`` with ``top = ceil(log2 t) + extra`` and a
    smooth taper removes everything beyond ``2^(top + 2)``. Over the first two
    units of the window the trace is blended into its limit ``1``; the change
    there is of order ``t e^lo``.

    Returns
    -------
    samples : ndarray
    grid : BesovGrid
    top : int
        Highest level unaffected by the taper is ``top - 1``.
    """
    top = int(np.ceil(np.log2(max(t, 1.0)))) + extra
    hi = np.log(2.0 ** (top + 2) / max(t, 1e-300))
    grid = BesovGrid.uniform(lo, hi, np.pi / 2.0 ** (top + 4), n_max=top)
    x = grid.x
    z = sign * 1j * np.exp(x)
    f = (1 + z) ** (-J - eps) * np.exp(-t * z) * (1 - smooth_step(x - (hi - 1.5)))
    # flatten onto m_t(0) = 1 at the left end so the even extension is smooth there
    f = 1 + (f - 1) * smooth_step((x - lo) / 2)
    return f, grid, top


def regularized_semigroup_besov(t: float, J: float, eps: float, extra: int = 6,
                                lo: float = -12.0) -> dict:
    """Norm of ``m_t`` in the Besov-refined ``H^inf`` class of the right half-plane.

    ``sup |m_t|`` (equal to ``m_t(0) = 1``) plus the ``B^J_{inf,1}`` norms of the
    two boundary traces. Levels up to ``top - 2`` are measured; the tail is
    extrapolated geometrically.
    """
    out = {"t": t, "J": J, "eps": eps, "sup": 1.0}
    total = 1.0
    for sign, key in ((1, "plus"), (-1, "minus")):
        f, grid, top = regularized_trace(t, J, eps, sign, extra, lo)
        res = besov_norm(f, J, grid, levels=top - 2)
        out[key] = res.value
        out[key + "_tail"] = res.tail
        total += res.value
    out["value"] = total
    return out


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# --------------------------------------------------------------------------
# the gamma kernel

def log_gamma_hat(t, eps_angle: float):
    """``log[1 / (Gamma(1 - i t) cosh(alpha t))]`` with ``alpha = pi/2 + 2 eps``."""
    t = np.asarray(t, dtype=float)
    a = np.abs((np.pi / 2 + 2 * eps_angle) * t)
    log_cosh = a + np.log1p(np.exp(-2 * a)) - np.log(2.0)
    return -loggamma(1 - 1j * t) - log_cosh


def gamma_hat(t, eps_angle: float):
    return np.exp(log_gamma_hat(t, eps_angle))


def _check_gamma(t):
    # |Gamma(1 - i t)|^2 = pi t / sinh(pi t), in log form
    t = np.asarray(t, dtype=float)
    a = np.pi * np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ref = np.where(a > 0, np.log(np.where(a > 0, a, 1.0))
                       - (a + np.log1p(-np.exp(-2 * a)) - np.log(2.0)), 0.0)
    err = np.abs(2 * loggamma(1 - 1j * t).real - ref)
    if not np.all(err <= 1e-9 * np.maximum(1.0, np.abs(ref))):
        raise GammaEvalUnstable(f"complex Gamma off by {err.max():.3e} in log modulus")


@dataclass(frozen=True)
class GammaKernel:
    x: np.ndarray
    values: np.ndarray
    l1: float
    n: int
    dt: float


def gamma_kernel(eps_angle: float, dt: float = 0.02, tail: float = 40.0) -> GammaKernel:
    """Kernel ``gamma(x) = (1/2pi) int gamma_hat(t) e^{i x t} dt`` by FFT.

    The frequency window ``|t| <= tail / (2 eps) + 50`` leaves
    ``|gamma_hat| < e^(-tail)`` outside it.

    Raises
    ------
    GammaEvalUnstable
        If the complex Gamma evaluation fails its modulus identity.
    GridTooCoarse
        If the kernel has not decayed at the edge of the spatial window.
    """
    if not 0 < eps_angle < 1:
        raise InputError("angle parameter must lie in (0, 1)")
    T = tail / (2 * eps_angle) + 50.0
    n = int(2 ** np.ceil(np.log2(2 * T / dt)))
    t = (np.arange(n) - n // 2) * dt
    _check_gamma(t[:: max(1, n // 4096)])
    gh = gamma_hat(t, eps_angle)
    g = fft.fftshift(fft.ifft(fft.ifftshift(gh), workers=-1)) * n * dt / (2 * np.pi)
    dx = 2 * np.pi / (n * dt)
    x = (np.arange(n) - n // 2) * dx
    edge = np.abs(g[: n // 64]).max()
    if edge > 1e-8 * np.abs(g).max():
        raise GridTooCoarse("kernel has not decayed at the edge of the window; lower dt")
    return GammaKernel(x, g, float(np.abs(g).sum() * dx), n, dt)


def gamma_kernel_l1(eps_angle: float, dt: float = 0.02, tail: float = 40.0) -> float:
    """``L1`` norm of the gamma kernel."""
    return gamma_kernel(eps_angle, dt, tail).l1


def gamma_hat_decay_constant(eps_angle: float, t) -> float:
    """Smallest ``C`` with ``|gamma_hat(t)| <= C exp(-2 eps |t|)`` on the grid ``t``."""
    t = np.asarray(t, dtype=float)
    return float(np.exp(log_gamma_hat(t, eps_angle).real + 2 * eps_angle * np.abs(t)).max())


# --------------------------------------------------------------------------
# Hörmander norm

BUMP_SUPPORT = (0.5, 2.0)


def bump_derivatives(lam, order: int, a: float = BUMP_SUPPORT[0],
                     b: float = BUMP_SUPPORT[1]) -> np.ndarray:
    """Derivatives ``0 .. order`` of ``eta = exp(-1 / ((lam - a)(b - lam)))``.

    Shape ``(order + 1, len(lam))``; zero outside ``(a, b)``.
    """
    lam = np.asarray(lam, dtype=float)
    inside = (lam > a) & (lam < b)
    u = np.where(inside, lam - a, 1.0)
    v = np.where(inside, b - lam, 1.0)
    c = 1.0 / (b - a)
    # exponent g = -c (1/u + 1/v); its derivatives are explicit
    g = [-c * (1 / u + 1 / v)]
    fact = 1.0
    for j in range(1, order + 1):
        fact *= j
        g.append(-c * fact * ((-1) ** j / u ** (j + 1) + 1 / v ** (j + 1)))
    h = [np.exp(g[0])]
    for m in range(order):
        h.append(sum(comb(m, k) * g[k + 1] * h[m - k] for k in range(m + 1)))
    return np.where(inside, np.array(h), 0.0)


def hormander_norm(m: Multiplier, s: int, t_grid=None, lam_points: int = 2001) -> dict:
    """``sup_t max_{k <= s} sup_lam |d^k/dlam^k [eta(lam) m(t lam)]|``.

    Uses the closed-form derivatives of ``m`` and of the bump ``eta``.

    Returns
    -------
    dict
        ``value``, ``argmax_t`` and ``order`` attaining the maximum.
    """
    if m.derivative is None:
        raise InputError(f"multiplier '{m.name}' has no closed-form derivatives")
    if s < 0 or int(s) != s:
        raise InputError("smoothness must be a non-negative integer")
    s = int(s)
    t_grid = np.logspace(-4, 8, 481) if t_grid is None else np.asarray(t_grid, float)
    a, b = BUMP_SUPPORT
    lam = np.linspace(a, b, lam_points)
    eta = bump_derivatives(lam, s)
    best, best_t, best_k = 0.0, float(t_grid[0]), 0
    for t in t_grid:
        md = [t ** j * m.derivative(j, t * lam) for j in range(s + 1)]
        for k in range(s + 1):
            d = sum(comb(k, j) * eta[j] * md[k - j] for j in range(k + 1))
            val = float(np.abs(d).max())
            if val > best:
                best, best_t, best_k = val, float(t), k
    return {"value": best, "argmax_t": best_t, "order": best_k, "s": s}
