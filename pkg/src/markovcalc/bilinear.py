"""Bellman-function control of the weighted bilinear form of a semigroup.

Three layers, each checkable on finite spaces:

* the one-step inequality: for a submarkovian matrix ``T``,
  ``|<(I - T) f, g>| <= C Q Re <dB(V), (I - T) V>`` with ``V = (f, g, v, w)``;
* the energy ``E(t) = sum_x mu_x B(T_t f, T_t g, T_t v, T_t w)``, which
  decreases at a rate dominating ``|<A T_t f, T_t g>| / (C Q)``;
* the resulting bound ``int_0^inf |<A T_t f, T_t g>| dt <= C Q_2(w) ||f||_w ||g||_{1/w}``.

Brackets ``<f, g> = sum mu f g`` carry no complex conjugation.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .bellman import (DEFAULT_CONSTANTS, Q_MIN, BellmanConfig, _pairing,
                      sample_domain, value_and_gradient)
from .errors import DimensionMismatch, InputError, QuadratureNotConverged
from .semigroup import (MARKOVIAN, SUBMARKOVIAN, CemeterySemigroup, Generator,
                        apply_generator_semigroup, apply_semigroup, random_generator,
                        semigroup_at)
from .weights import as_weight, q2_characteristic, q2_tilde_characteristic


def weighted_l2(f, w, mu) -> float:
    """``(sum |f|^2 w mu)^(1/2)``."""
    return float(np.sqrt(np.sum(np.abs(f) ** 2 * w * mu)))


def bracket(f, g, mu) -> complex:
    """Unconjugated pairing ``sum mu f g``."""
    return complex(np.sum(mu * np.asarray(f) * np.asarray(g)))


# --------------------------------------------------------------------------
# one step

def check_submarkovian_matrix(T, mu, rtol: float = 1e-10) -> np.ndarray:
    """Validate a ``mu``-symmetric matrix with non-negative entries and row sums at most one."""
    T = np.asarray(T, dtype=float)
    n = len(mu)
    if T.shape != (n, n):
        raise DimensionMismatch(f"matrix {T.shape} vs {n} points")
    if T.min() < -rtol:
        raise InputError("a submarkovian matrix has non-negative entries")
    if T.sum(axis=1).max() > 1 + rtol * n:
        raise InputError("a submarkovian matrix has row sums at most one")
    flux = mu[:, None] * T
    if np.abs(flux - flux.T).max() > rtol * max(1.0, float(flux.max())):
        raise InputError("matrix is not self-adjoint for mu")
    return T


@dataclass(frozen=True)
class OneStepResult:
    """Both sides of the one-step inequality.

    ``lhs = |<(I - T) f, g>|``, ``bracket = Re <dB(V), (I - T) V>``,
    ``rhs = Q * bracket`` and ``ratio = lhs / rhs``. The ``jump_*`` and
    ``kill_*`` fields split each side into the contribution of transitions
    and of lost mass ``k = 1 - T 1``.
    """

    lhs: float
    bracket: float
    rhs: float
    ratio: float
    jump_lhs: float
    kill_lhs: float
    jump_bracket: float
    kill_bracket: float


def one_step_inequality(T, f, g, v1, v2, cfg: BellmanConfig, mu=None) -> OneStepResult:
    """Evaluate the one-step inequality for one submarkovian matrix.

    Raises
    ------
    DomainViolation
        If some ``(f, g, v1, v2)(x)`` lies outside the Bellman domain.
    """
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    mu = np.ones(f.size) if mu is None else np.asarray(mu, dtype=float)
    T = check_submarkovian_matrix(T, mu)
    _, grad, _ = value_and_gradient(f, g, v1, v2, cfg)

    def step(h):
        return h - T @ h

    lhs = abs(bracket(step(f), g, mu))
    br = float(np.sum(mu * _pairing(grad, step(f), step(g), step(v1), step(v2))))

    k = 1.0 - T.sum(axis=1)
    W = mu[:, None] * T
    df = f[:, None] - f[None, :]
    dg = g[:, None] - g[None, :]
    jump_lhs = 0.5 * abs(np.sum(W * df * dg))
    kill_lhs = abs(np.sum(mu * k * f * g))
    gd = grad[:, :, None] - grad[:, None, :]
    jump_br = 0.5 * float(np.sum(W * _pairing(gd, df, dg, v1[:, None] - v1[None, :],
                                              v2[:, None] - v2[None, :])))
    kill_br = float(np.sum(mu * k * _pairing(grad, f, g, v1, v2)))
    rhs = cfg.Q * br
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return OneStepResult(lhs, br, rhs, float(ratio), float(jump_lhs), float(kill_lhs),
                         jump_br, kill_br)


def toy_two_point_inequality(f, g, v1, v2, cfg: BellmanConfig) -> OneStepResult:
    """One-step inequality on two points for the jump ``T = [[0, 1], [1, 0]]``.

    It reduces to ``|f(a) - f(b)| |g(a) - g(b)| <= C Q Re[(dB(V_a) - dB(V_b)).(V_a - V_b)]``,
    the symmetrised Bregman gap of the pair; ``lhs`` and ``bracket`` hold
    those two quantities.
    """
    f, g, v1, v2 = (np.asarray(a) for a in (f, g, v1, v2))
    if f.shape != (2,):
        raise DimensionMismatch("the toy inequality lives on two points")
    _, grad, _ = value_and_gradient(f.astype(complex), g.astype(complex),
                                    v1.astype(float), v2.astype(float), cfg)
    lhs = float(abs(f[0] - f[1]) * abs(g[0] - g[1]))
    br = float(_pairing(grad[:, 0] - grad[:, 1], f[0] - f[1], g[0] - g[1],
                        v1[0] - v1[1], v2[0] - v2[1]))
    rhs = cfg.Q * br
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return OneStepResult(lhs, br, rhs, float(ratio), lhs, 0.0, br, 0.0)


def random_submarkovian_matrix(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``exp(-t A)`` for a random submarkovian generator and log-uniform ``t``.

    Returns ``(T, mu)``.
    """
    gen = random_generator(n, rng, SUBMARKOVIAN, killing=rng.uniform(0.0, 1.0))
    t = 10 ** rng.uniform(-2, 1)
    return semigroup_at(gen, t), gen.mu


def random_domain_data(n: int, cfg: BellmanConfig, rng: np.random.Generator):
    """Point values ``(f, g, v1, v2)`` drawn from the Bellman domain of ``cfg``."""
    return sample_domain(n, cfg.Q, cfg.eps, rng, max_abs=rng.uniform(0.1, 10.0))


def one_step_sweep(trials: int, rng: np.random.Generator, dims=(2, 8), Q_range=(16, 100),
                   eps: float = 0.02, C=DEFAULT_CONSTANTS) -> dict:
    """Random one-step instances; reports the worst ratio and the smallest bracket."""
    worst, min_br, records = 0.0, np.inf, []
    for _ in range(trials):
        n = int(rng.integers(dims[0], dims[1] + 1))
        cfg = BellmanConfig(float(rng.uniform(*Q_range)), eps, C)
        T, mu = random_submarkovian_matrix(n, rng)
        f, g, v1, v2 = random_domain_data(n, cfg, rng)
        res = one_step_inequality(T, f, g, v1, v2, cfg, mu)
        scale = cfg.Q * np.sum(mu * (np.abs(f) ** 2 / v1 + np.abs(g) ** 2 / v2))
        worst = max(worst, res.ratio)
        min_br = min(min_br, res.bracket / max(scale, 1e-300))
        records.append((n, cfg.Q, res.ratio, res.bracket))
    return {"trials": trials, "max_ratio": float(worst),
            "min_relative_bracket": float(min_br), "records": records}


# --------------------------------------------------------------------------
# energy along the semigroup

@dataclass(frozen=True)
class BilinearInstance:
    """Generator, weight and data, with the Bellman normalisation attached.

    The second weight is ``v = 2 / w`` and ``Q = max(4 Q_2(w), q_min)``, so
    ``2 <= T_t v T_t w <= Q / 2`` for every ``t``. For a submarkovian
    generator with ``cemetery=True`` both weights live on the extended
    space (values ``2`` and ``1`` at the absorbing point) and ``Q_2`` is the
    characteristic of the extended weight.

    ``eps`` is the tightest box containing both weights.
    """

    gen: Generator
    w: np.ndarray
    f: np.ndarray
    g: np.ndarray
    C: tuple = DEFAULT_CONSTANTS
    cemetery: bool = False
    q_min: float = Q_MIN
    q2: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        n = self.gen.n
        object.__setattr__(self, "w", as_weight(self.w, n))
        for name in ("f", "g"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            if arr.shape != (n,):
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if self.cemetery and self.gen.kind != SUBMARKOVIAN:
            raise InputError("the cemetery construction needs a submarkovian generator")
        if np.isnan(self.q2):
            char = q2_tilde_characteristic if self.cemetery else q2_characteristic
            object.__setattr__(self, "q2", char(self.gen, self.w).value)

    @property
    def v(self) -> np.ndarray:
        return 2.0 / self.w

    @property
    def w_inf(self) -> float:
        return 1.0

    @property
    def v_inf(self) -> float:
        return 2.0

    @property
    def Q(self) -> float:
        return max(4.0 * self.q2, self.q_min)

    @property
    def eps(self) -> float:
        vals = np.concatenate([self.w, self.v] + ([[1.0, 2.0]] if self.cemetery else []))
        return float(min(vals.min(), 1.0 / vals.max(), 0.5))

    @property
    def cfg(self) -> BellmanConfig:
        return BellmanConfig(self.Q, self.eps, self.C, min(self.q_min, self.Q))

    def transported(self, t):
        """``(T_t f, T_t g, T_t v, T_t w)`` (cemetery-transported weights if enabled)."""
        gen = self.gen
        tf = apply_semigroup(gen, t, self.f)
        tg = apply_semigroup(gen, t, self.g)
        if self.cemetery:
            cs = CemeterySemigroup(gen)
            tv = cs.apply(t, np.append(self.v, self.v_inf))[..., :-1]
            tw = cs.apply(t, np.append(self.w, self.w_inf))[..., :-1]
        else:
            tv = apply_semigroup(gen, t, self.v)
            tw = apply_semigroup(gen, t, self.w)
        return tf, tg, tv, tw

    def velocity(self, t):
        """``-d/dt`` of :meth:`transported`."""
        gen = self.gen
        a = apply_generator_semigroup
        if self.cemetery:
            av = a(gen, t, self.v - self.v_inf)
            aw = a(gen, t, self.w - self.w_inf)
        else:
            av, aw = a(gen, t, self.v), a(gen, t, self.w)
        return a(gen, t, self.f), a(gen, t, self.g), av, aw


@dataclass(frozen=True)
class EnergyCurve:
    """Energy and its decay rate on a time grid.

    ``decay`` is ``-E'(t)`` from the analytic formula, ``decay_fd`` the same
    from a five-point difference (``nan`` where no stencil fits), and
    ``integrand`` is ``|<A T_t f, T_t g>|``. ``correction`` is the smallest
    pointwise value of the absorbing-point term, ``nan`` without cemetery.
    """

    t: np.ndarray
    energy: np.ndarray
    decay: np.ndarray
    decay_fd: np.ndarray
    integrand: np.ndarray
    correction: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "E", "dE_analytic", "dE_fd", "integrand", "correction"])
        for row in zip(self.t, self.energy, self.decay, self.decay_fd, self.integrand,
                       self.correction):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def monotone(self, rtol: float = 1e-9) -> bool:
        scale = max(1.0, float(np.abs(self.energy).max()))
        return bool(np.all(np.diff(self.energy) <= rtol * scale))

    def fd_error(self) -> float:
        """Worst ``|decay - decay_fd|`` relative to ``max(|decay|, 1e-6 max|decay|)``."""
        ok = np.isfinite(self.decay_fd)
        if not ok.any():
            return 0.0
        floor = 1e-6 * np.abs(self.decay[ok]).max(initial=0.0)
        den = np.maximum(np.abs(self.decay[ok]), max(floor, 1e-300))
        return float((np.abs(self.decay[ok] - self.decay_fd[ok]) / den).max())


def mass_loss(gen: Generator, t) -> np.ndarray:
    """``1 - T_t 1`` summed mode by mode with ``expm1``, accurate for small ``t``."""
    sd = gen.spectral
    c = sd.coefficients(np.ones(gen.n))
    t = np.asarray(t, dtype=float)
    loss = -np.expm1(-np.multiply.outer(np.where(np.isinf(t), 0.0, t), sd.eigenvalues))
    loss = np.where(np.isinf(t)[..., None], 1.0, loss)
    loss = np.where(sd.kernel_mask, 0.0, loss)
    return (loss * c) @ sd.vectors.T


def default_energy_grid(points: int = 81) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-4, 4, points)])


def energy(inst: BilinearInstance, t, cfg: BellmanConfig | None = None) -> np.ndarray:
    """``E(t)`` along an array of times."""
    cfg = inst.cfg if cfg is None else cfg
    tf, tg, tv, tw = inst.transported(np.atleast_1d(t))
    val, _, _ = value_and_gradient(tf, tg, tv, tw, cfg, check=False)
    return val @ inst.gen.mu


def energy_curve(inst: BilinearInstance, t_grid=None, rel_step: float = 1e-3) -> EnergyCurve:
    """Evaluate ``E``, ``-E'`` (analytic and finite-difference) and the integrand.

    Raises
    ------
    DomainViolation
        Naming the first grid time whose transported data leave the domain.
    """
    t = default_energy_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    cfg = inst.cfg
    mu = inst.gen.mu
    tf, tg, tv, tw = inst.transported(t)
    for k in range(len(t)):
        try:
            value_and_gradient(tf[k], tg[k], tv[k], tw[k], cfg)
        except InputError as exc:
            raise type(exc)(f"at t = {t[k]:.6g}: {exc}") from None
    val, grad, _ = value_and_gradient(tf, tg, tv, tw, cfg, check=False)
    E = val @ mu
    af, ag, av, aw = inst.velocity(t)
    decay = _pairing(grad, af, ag, av, aw) @ mu
    integrand = np.abs(np.sum(mu * af * tg, axis=-1))

    fd = np.full(len(t), np.nan)
    pos = t > 0
    h = rel_step * t[pos]
    if pos.any():
        stencil = [energy(inst, t[pos] + c * h, cfg) for c in (-2, -1, 1, 2)]
        d = (stencil[0] - 8 * stencil[1] + 8 * stencil[2] - stencil[3]) / (12 * h)
        fd[pos] = -d

    corr = np.full(len(t), np.nan)
    if inst.cemetery:
        term = (grad[4] * inst.v_inf + grad[5] * inst.w_inf) * -mass_loss(inst.gen, t)
        corr = term.min(axis=-1)
    return EnergyCurve(t, E, decay, fd, integrand, corr)


# --------------------------------------------------------------------------
# the bilinear integral

@dataclass(frozen=True)
class BilinearIntegral:
    value: float
    abserr: float
    tail: float
    windows: int


def bilinear_integral(gen: Generator, f, g, rtol: float = 1e-10, tail_tol: float = 1e-12,
                      max_windows: int = 400) -> BilinearIntegral:
    """``int_0^inf |sum_j lam_j e^{-2 lam_j t} <f, e_j> <g, e_j>| dt``.

    Adaptive Gauss-Kronrod on dyadic windows in units of ``1 / lam_min``
    (smallest positive eigenvalue), stopping once the tail bound
    ``sum_j |c_j| e^{-2 lam_j T} / 2`` drops below ``tail_tol`` times
    ``sum_j |c_j| / 2``. Kernel modes contribute nothing and are dropped.

    Raises
    ------
    QuadratureNotConverged
    """
    sd = gen.spectral
    keep = ~sd.kernel_mask
    lam = sd.eigenvalues[keep]
    c = (sd.coefficients(np.asarray(f, dtype=complex))
         * sd.coefficients(np.asarray(g, dtype=complex)))[keep]
    scale = float(np.abs(c).sum() / 2)
    if lam.size == 0 or scale == 0:
        return BilinearIntegral(0.0, 0.0, 0.0, 0)

    def h(t):
        return abs(np.sum(lam * np.exp(-2 * lam * t) * c))

    def tail(T):
        return float(np.sum(np.abs(c) * np.exp(-2 * lam * T)) / 2)

    unit = 1.0 / lam.min()
    start = int(np.floor(np.log2(lam.min() / lam.max()))) - 4
    edges = [0.0] + [unit * 2.0 ** k for k in range(start, start + max_windows)]
    total, err = 0.0, 0.0
    for k in range(len(edges) - 1):
        a, b = edges[k], edges[k + 1]
        val, e = integrate.quad(h, a, b, epsabs=tail_tol * scale * 1e-2, epsrel=rtol,
                                limit=200)
        total += val
        err += e
        if tail(b) < tail_tol * scale:
            if err > max(rtol * total, tail_tol * scale):
                raise QuadratureNotConverged(f"error estimate {err:.3e} vs value {total:.3e}")
            return BilinearIntegral(float(total), float(err), tail(b), k + 1)
    raise QuadratureNotConverged("tail bound did not fall below tolerance")


def bilinear_ratio(inst: BilinearInstance) -> dict:
    """``int |<A T_t f, T_t g>| dt / (Q_2 ||f||_w ||g||_{1/w})``."""
    mu = inst.gen.mu
    val = bilinear_integral(inst.gen, inst.f, inst.g).value
    nf = weighted_l2(inst.f, inst.w, mu)
    ng = weighted_l2(inst.g, 1.0 / inst.w, mu)
    den = inst.q2 * nf * ng
    return {"value": val, "q2": inst.q2, "norm_f": nf, "norm_g": ng,
            "ratio": val / den if den > 0 else 0.0}


def check_instance(inst: BilinearInstance, t_grid=None, one_step_constant: float = 0.25) -> dict:
    """Run the whole chain on one instance.

    Returns the energy diagnostics, the decay-versus-integrand margin
    ``min(-E' - |<A T_t f, T_t g>| / (C Q))`` scaled by ``E(0)``, the
    starting-energy bound and the bilinear ratio.
    """
    curve = energy_curve(inst, t_grid)
    mu = inst.gen.mu
    cfg = inst.cfg
    scale = max(abs(float(curve.energy[0])), 1e-300)
    margin = (curve.decay - curve.integrand / (one_step_constant * cfg.Q)).min() / scale
    start_bound = sum(cfg.C) * (0.5 * weighted_l2(inst.f, inst.w, mu) ** 2
                                + weighted_l2(inst.g, 1.0 / inst.w, mu) ** 2)
    out = {"n": inst.gen.n, "Q": cfg.Q, "eps": cfg.eps, "q2": inst.q2,
           "monotone": curve.monotone(), "fd_error": curve.fd_error(),
           "decay_margin": float(margin), "energy0": float(curve.energy[0]),
           "energy0_bound": float(start_bound)}
    if inst.cemetery:
        out["correction_min"] = float(np.nanmin(curve.correction))
    out.update(bilinear_ratio(inst))
    return out


def submarkovian_bilinear_check(gen: Generator, w, f, g, C=DEFAULT_CONSTANTS,
                                t_grid=None, one_step_constant: float = 0.25) -> dict:
    """Bilinear chain for a submarkovian generator through its cemetery extension.

    The characteristic is that of the weight extended by ``1``; the report
    includes the smallest absorbing-point correction term, which must be
    non-negative. A markovian generator is handled by the plain chain.
    """
    cemetery = gen.kind == SUBMARKOVIAN
    inst = BilinearInstance(gen, w, f, g, C, cemetery=cemetery)
    out = check_instance(inst, t_grid, one_step_constant)
    out["cemetery"] = cemetery
    return out


def random_instance(n: int, rng: np.random.Generator, kind: str = MARKOVIAN,
                    spread: float | None = None, C=DEFAULT_CONSTANTS) -> BilinearInstance:
    """Random generator, log-normal weight with ``spread`` and complex Gaussian data."""
    gen = random_generator(n, rng, kind, killing=rng.uniform(0.05, 1.0))
    spread = rng.uniform(0.0, 2.5) if spread is None else spread
    w = np.exp(spread * rng.standard_normal(n))
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return BilinearInstance(gen, w, f, g, C, cemetery=kind == SUBMARKOVIAN)


def bucket_constants(records, edges=(4.0, 16.0, 100.0)) -> dict:
    """Largest ratio per ``Q_2`` bucket ``(prev, edge]`` and the spread across buckets.

    ``spread`` is ``(max - min) / (max + min)`` of the bucket maxima, so
    ``spread <= 0.2`` means every bucket lies within 20% of the common centre.
    """
    out, lo = {}, 0.0
    for hi in edges:
        vals = [r["ratio"] for r in records if lo < r["q2"] <= hi]
        out[f"<={hi:g}"] = {"count": len(vals), "max_ratio": max(vals) if vals else None}
        lo = hi
    maxima = [b["max_ratio"] for b in out.values() if b["max_ratio"] is not None]
    spread = ((max(maxima) - min(maxima)) / (max(maxima) + min(maxima))
              if len(maxima) > 1 else 0.0)
    return {"buckets": out, "spread": float(spread)}


def bilinear_sweep(trials: int, rng: np.random.Generator, kind: str = MARKOVIAN,
                   dims=(2, 8), q2_max: float = 100.0, t_grid=None,
                   one_step_constant: float = 0.25) -> dict:
    """Random instances through :func:`check_instance`; instances with ``Q_2 > q2_max`` are redrawn."""
    records = []
    while len(records) < trials:
        n = int(rng.integers(dims[0], dims[1] + 1))
        inst = random_instance(n, rng, kind)
        if inst.q2 > q2_max:
            continue
        records.append(check_instance(inst, t_grid, one_step_constant))
    summary = bucket_constants(records) if records else {"buckets": {}, "spread": 0.0}
    summary.update({"trials": trials, "kind": kind, "records": records})
    return summary
