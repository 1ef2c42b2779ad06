"""Six-piece Bellman function for weighted bilinear estimates.

The function is ``B = sum_i C_i B_i`` on the domain

    D(Q, eps) = {(x, y, r, s) in C x C x R+ x R+ : 1 <= r s <= Q,
                 eps <= r, s <= 1/eps}.

With ``X = |x|^2``, ``Y = |y|^2`` and the auxiliary profiles

    N(r, s) = sqrt(rs/Q) - (rs)^2 / (128 Q^2),
    K(r, s) = sqrt(rs/Q) - rs / (8 Q),

the pieces are

    B1 = X/r + Y/s
    B2 = X/(2r - 1/(s(N+1))) + Y/s        B5 = same with K in place of N
    B3 = X/r + Y/(2s - 1/(r(N+1)))        B6 = same with K in place of N
    B4 = sup_{alpha>0} X/(r + alpha K) + Y/(s + K/alpha).

The supremum in ``B4`` is resolved exactly: with ``p = |y| r - |x| K`` and
``m = |x| s - |y| K`` it is attained inside ``(0, inf)`` iff ``p > 0`` and
``m > 0`` (value ``(X s - 2|x||y|K + Y r)/(rs - K^2)``); otherwise ``alpha``
runs off to ``inf`` when ``p > 0`` (value ``Y/s``) or to ``0`` when ``m > 0``
(value ``X/r``).

Gradients are returned as six real partials in the order
``(d/dx1, d/dx2, d/dy1, d/dy2, d/dr, d/ds)`` where ``x = x1 + i x2``.
The complex derivative used in pairings is ``d/dx1 - i d/dx2``, so that
``Re[dB . dV]`` is the ordinary Euclidean pairing.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CalibrationFailed, DomainViolation, InputError

Q_MIN = 16.0
PIECE_LABELS = ("zero", "interior", "x_only", "y_only")
# Output of calibrate_constants at (16, 0.05) and (100, 0.02); the test-suite
# re-derives them.
DEFAULT_CONSTANTS = (1.0, 16.0, 16.0, 16.0, 16.0, 16.0)


@dataclass(frozen=True)
class BellmanConfig:
    """Domain parameters and combination constants.

    Parameters
    ----------
    Q : float
        Upper bound of ``r s``. Must be at least ``q_min``.
    eps : float
        Box bound, ``eps <= r, s <= 1/eps``.
    C : tuple of six positive floats
    q_min : float
        Smallest admissible ``Q``; lower it explicitly to explore small ``Q``.
    """

    Q: float
    eps: float
    C: tuple = DEFAULT_CONSTANTS
    q_min: float = Q_MIN

    def __post_init__(self):
        C = tuple(float(c) for c in self.C)
        object.__setattr__(self, "C", C)
        if len(C) != 6 or min(C) <= 0:
            raise InputError("need six strictly positive constants")
        if not 0 < self.eps < 1:
            raise InputError("eps must lie in (0, 1)")
        if self.Q < self.q_min:
            raise InputError(f"Q = {self.Q} is below Q_min = {self.q_min}")
        if self.eps ** 2 > self.Q or 1 > self.eps ** -2:
            raise InputError("domain is empty")

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(self.C)

    def with_constants(self, C) -> "BellmanConfig":
        return BellmanConfig(self.Q, self.eps, tuple(C), self.q_min)


@dataclass(frozen=True)
class BellmanPoint:
    x: complex
    y: complex
    r: float
    s: float


@dataclass(frozen=True)
class BellmanEval:
    value: float
    gradient: np.ndarray
    active_piece: str


def _profiles(rs, Q):
    q = np.sqrt(rs / Q)
    N = q - rs ** 2 / (128 * Q ** 2)
    K = q - rs / (8 * Q)
    # r * dN/dr = s * dN/ds, same for K
    rN = q / 2 - rs ** 2 / (64 * Q ** 2)
    rK = q / 2 - rs / (8 * Q)
    return N, rN, K, rK


def _quotient(x, y, X, Y, D1, D1r, D1s, D2, D2r, D2s):
    val = X / D1 + Y / D2
    grad = np.stack([2 * x.real / D1, 2 * x.imag / D1,
                     2 * y.real / D2, 2 * y.imag / D2,
                     -X * D1r / D1 ** 2 - Y * D2r / D2 ** 2,
                     -X * D1s / D1 ** 2 - Y * D2s / D2 ** 2])
    return val, grad


def _h4(x, y, X, Y, r, s, K, Kr, Ks):
    a, b = np.abs(x), np.abs(y)
    p = b * r - a * K
    m = a * s - b * K
    inner = (p > 0) & (m > 0)
    y_only = (p > 0) & ~inner
    x_only = (m > 0) & ~inner
    label = np.select([inner, x_only, y_only], [1, 2, 3], 0)

    D = r * s - K ** 2
    H = (X * s - 2 * a * b * K + Y * r) / D
    a_safe = np.where(a > 0, a, 1.0)
    b_safe = np.where(b > 0, b, 1.0)
    Ha = 2 * m / D
    Hb = 2 * p / D
    HK = 2 * (K * H - a * b) / D
    g_in = np.stack([Ha * x.real / a_safe, Ha * x.imag / a_safe,
                     Hb * y.real / b_safe, Hb * y.imag / b_safe,
                     -(m / D) ** 2 + HK * Kr,
                     -(p / D) ** 2 + HK * Ks])
    zero = np.zeros_like(r)
    g_x = np.stack([2 * x.real / r, 2 * x.imag / r, zero, zero, -X / r ** 2, zero])
    g_y = np.stack([zero, zero, 2 * y.real / s, 2 * y.imag / s, zero, -Y / s ** 2])
    val = np.select([inner, x_only, y_only], [H, X / r, Y / s], 0.0)
    grad = np.where(inner, g_in, np.where(x_only, g_x, np.where(y_only, g_y, 0.0)))
    return val, grad, label


def pieces(x, y, r, s, Q):
    """Values and gradients of the six pieces, vectorized.

    Parameters
    ----------
    x, y : complex array_like
    r, s : real array_like
    Q : float

    Returns
    -------
    values : ndarray, shape (6,) + shape
    gradients : ndarray, shape (6, 6) + shape
        ``gradients[i, k]`` is partial ``k`` of piece ``i``.
    label : ndarray of int
        Index into :data:`PIECE_LABELS` for the case of ``B4``.
    """
    x, y, r, s = np.broadcast_arrays(np.asarray(x, dtype=complex), np.asarray(y, dtype=complex),
                                     np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    X, Y = np.abs(x) ** 2, np.abs(y) ** 2
    rs = r * s
    N, rN, K, rK = _profiles(rs, Q)
    Nr, Ns, Kr, Ks = rN / r, rN / s, rK / r, rK / s
    one, nil = np.ones_like(r), np.zeros_like(r)

    def deformed(M, Mr, Ms):
        # x-side denominator 2r - 1/(s(M+1)), y-side 2s - 1/(r(M+1))
        M1 = M + 1
        x_side = _quotient(x, y, X, Y, 2 * r - 1 / (s * M1), 2 + Mr / (s * M1 ** 2),
                           1 / (s ** 2 * M1) + Ms / (s * M1 ** 2), s, nil, one)
        y_side = _quotient(x, y, X, Y, r, one, nil, 2 * s - 1 / (r * M1),
                           1 / (r ** 2 * M1) + Mr / (r * M1 ** 2), 2 + Ms / (r * M1 ** 2))
        return x_side, y_side

    b1 = _quotient(x, y, X, Y, r, one, nil, s, nil, one)
    b2, b3 = deformed(N, Nr, Ns)
    b5, b6 = deformed(K, Kr, Ks)
    v4, g4, label = _h4(x, y, X, Y, r, s, K, Kr, Ks)
    vals = [b1[0], b2[0], b3[0], v4, b5[0], b6[0]]
    grads = [b1[1], b2[1], b3[1], g4, b5[1], b6[1]]
    return np.stack(vals), np.stack(grads), label


def in_domain(x, y, r, s, Q, eps, rtol: float = 1e-12):
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    rs = r * s
    ok = (rs >= 1 - rtol) & (rs <= Q * (1 + rtol))
    ok &= (r >= eps * (1 - rtol)) & (r <= (1 + rtol) / eps)
    ok &= (s >= eps * (1 - rtol)) & (s <= (1 + rtol) / eps)
    ok &= np.isfinite(np.asarray(x, dtype=complex)) & np.isfinite(np.asarray(y, dtype=complex))
    return ok


def check_domain(x, y, r, s, cfg: BellmanConfig) -> None:
    ok = in_domain(x, y, r, s, cfg.Q, cfg.eps)
    if not np.all(ok):
        bad = np.argwhere(~np.atleast_1d(ok))[0]
        rb = np.atleast_1d(np.broadcast_to(r, np.shape(ok)))[tuple(bad)]
        sb = np.atleast_1d(np.broadcast_to(s, np.shape(ok)))[tuple(bad)]
        raise DomainViolation(
            f"(r, s) = ({rb:.6g}, {sb:.6g}) outside 1 <= rs <= {cfg.Q}, "
            f"{cfg.eps} <= r, s <= {1 / cfg.eps:.6g}")


def value_and_gradient(x, y, r, s, cfg: BellmanConfig, check: bool = True):
    """Vectorized ``B`` and its six partials.

    Returns
    -------
    value : ndarray
    gradient : ndarray, shape (6,) + shape
    label : ndarray of int
    """
    if check:
        check_domain(x, y, r, s, cfg)
    vals, grads, label = pieces(x, y, r, s, cfg.Q)
    C = cfg.coefficients
    return (np.tensordot(C, vals, axes=1), np.tensordot(C, grads, axes=1), label)


def _unpack(V):
    if isinstance(V, BellmanPoint):
        return V.x, V.y, V.r, V.s
    return V


def eval_pieces(V, cfg: BellmanConfig):
    """Six piece values and gradients at ``V`` (validated against the domain)."""
    x, y, r, s = _unpack(V)
    check_domain(x, y, r, s, cfg)
    vals, grads, _ = pieces(x, y, r, s, cfg.Q)
    return vals, grads


def eval(V, cfg: BellmanConfig) -> BellmanEval:  # noqa: A001 - mirrors the operation name
    """Value, gradient and active ``B4`` case at a single point."""
    x, y, r, s = _unpack(V)
    val, grad, label = value_and_gradient(x, y, r, s, cfg)
    return BellmanEval(float(val), np.asarray(grad, dtype=float),
                       PIECE_LABELS[int(label)])


def _pairing(grad, dx, dy, dr, ds):
    dx = np.asarray(dx, dtype=complex)
    dy = np.asarray(dy, dtype=complex)
    return (grad[0] * dx.real + grad[1] * dx.imag + grad[2] * dy.real
            + grad[3] * dy.imag + grad[4] * dr + grad[5] * ds)


def bregman(V, V0, cfg: BellmanConfig, check: bool = True):
    """``B(V) - B(V0) - dB(V0).(V - V0)`` (vectorized over stacked tuples)."""
    x, y, r, s = _unpack(V)
    x0, y0, r0, s0 = _unpack(V0)
    b1, _, _ = value_and_gradient(x, y, r, s, cfg, check)
    b0, g0, _ = value_and_gradient(x0, y0, r0, s0, cfg, check)
    return b1 - b0 - _pairing(g0, np.subtract(x, x0), np.subtract(y, y0),
                              np.subtract(r, r0), np.subtract(s, s0))


def one_leg_defect(V, V0, cfg: BellmanConfig):
    """Bregman gap minus ``(2/Q)|x - x0||y - y0|``; non-negative when the inequality holds."""
    x, y, _, _ = _unpack(V)
    x0, y0, _, _ = _unpack(V0)
    gap = bregman(V, V0, cfg)
    return gap - 2.0 / cfg.Q * np.abs(np.subtract(x, x0)) * np.abs(np.subtract(y, y0))


# --------------------------------------------------------------------------
# sampling

def sample_domain(n: int, Q: float, eps: float, rng: np.random.Generator,
                  max_abs: float = 10.0):
    """Random points of the domain.

    ``r`` is log-uniform on ``[eps, 1/eps]``, ``r s`` uniform on ``[1, Q]``
    (rejecting ``s`` outside the box), moduli of ``x, y`` uniform on
    ``[0, max_abs]`` with uniform phases.
    """
    rs_out, ss_out = [np.empty(0)], [np.empty(0)]
    have = 0
    while have < n:
        m = max(2 * (n - have), 64)
        r = np.exp(rng.uniform(np.log(eps), -np.log(eps), m))
        s = rng.uniform(1.0, Q, m) / r
        ok = (s >= eps) & (s <= 1 / eps)
        rs_out.append(r[ok])
        ss_out.append(s[ok])
        have += int(ok.sum())
    r = np.concatenate(rs_out)[:n]
    s = np.concatenate(ss_out)[:n]
    x = rng.uniform(0, max_abs, n) * np.exp(2j * np.pi * rng.random(n))
    y = rng.uniform(0, max_abs, n) * np.exp(2j * np.pi * rng.random(n))
    return x, y, r, s


def sample_pairs(n: int, Q: float, eps: float, rng: np.random.Generator):
    """Exactly ``n`` pairs ``(V, V0)`` of domain points, mixing three regimes.

    Half are independent draws. A quarter are local moves along which
    ``x/r`` and ``y/s`` stay fixed, the directions where ``B1`` is affine and
    the remaining pieces carry all of the convexity. The last quarter are
    small random moves around ``V0``. Moves leaving the domain are redrawn.
    """
    parts, have = [], 0
    while have < n:
        V, W = _pair_batch(n - have, Q, eps, rng)
        parts.append((V, W))
        have += len(V[0])
    V = tuple(np.concatenate([p[0][i] for p in parts])[:n] for i in range(4))
    W = tuple(np.concatenate([p[1][i] for p in parts])[:n] for i in range(4))
    return V, W


def _pair_batch(n, Q, eps, rng):
    n_far = n // 2
    n_null = n // 4
    n_near = n - n_far - n_null
    V0 = sample_domain(n, Q, eps, rng)
    far = sample_domain(n_far, Q, eps, rng)

    def local(idx, step):
        x0, y0, r0, s0 = (c[idx] for c in V0)
        k = len(idx)
        return x0, y0, r0, s0, k, step(k)

    parts_V, parts_V0 = [far], [tuple(c[:n_far] for c in V0)]

    idx = np.arange(n_far, n_far + n_null)
    x0, y0, r0, s0, k, (tau, sig) = local(
        idx, lambda k: (rng.choice([-1, 1], k) * 10 ** rng.uniform(-3, -0.5, k),
                        rng.choice([-1, 1], k) * 10 ** rng.uniform(-3, -0.5, k)))
    parts_V.append((x0 * (1 + tau), y0 * (1 + sig), r0 * (1 + tau), s0 * (1 + sig)))
    parts_V0.append((x0, y0, r0, s0))

    idx = np.arange(n_far + n_null, n)
    x0, y0, r0, s0, k, scale = local(idx, lambda k: 10 ** rng.uniform(-3, -0.5, k))
    dz = rng.normal(size=(6, k)) * scale
    parts_V.append((x0 + (dz[0] + 1j * dz[1]) * (1 + np.abs(x0)),
                    y0 + (dz[2] + 1j * dz[3]) * (1 + np.abs(y0)),
                    r0 * np.exp(dz[4]), s0 * np.exp(dz[5])))
    parts_V0.append((x0, y0, r0, s0))

    V = tuple(np.concatenate([p[i] for p in parts_V]) for i in range(4))
    W = tuple(np.concatenate([p[i] for p in parts_V0]) for i in range(4))
    ok = in_domain(*V, Q, eps) & in_domain(*W, Q, eps)
    return tuple(c[ok] for c in V), tuple(c[ok] for c in W)


# --------------------------------------------------------------------------
# properties
#
# Every property is linear in the constants C, so per-piece quantities are
# computed once per sample set and recombined cheaply for each candidate C.

def _chunks(n, size):
    for a in range(0, n, size):
        yield slice(a, min(n, a + size))


def _stack_points(pts):
    x, y, r, s = pts
    return np.stack([x.real, x.imag, y.real, y.imag, r, s])


def piece_gaps(V, V0, Q, chunk: int = 100_000) -> np.ndarray:
    """Bregman gaps of each piece; shape ``(6, m)``."""
    out = np.empty((6, len(V[0])))
    for sl in _chunks(len(V[0]), chunk):
        v = tuple(c[sl] for c in V)
        w = tuple(c[sl] for c in V0)
        b1, _, _ = pieces(*v, Q)
        b0, g0, _ = pieces(*w, Q)
        d = [v[0] - w[0], v[1] - w[1], v[2] - w[2], v[3] - w[3]]
        out[:, sl] = b1 - b0 - _pairing(np.moveaxis(g0, 1, 0), *d)
    return out


def piece_hessians(pts, Q, h: float = 1e-5) -> np.ndarray:
    """Central differences of each piece's analytic gradient; shape ``(6, m, 6, 6)``.

    Steps are relative, ``h * max(1, |coordinate|)``.
    """
    base = _stack_points(pts)
    H = np.empty((6, 6, 6, base.shape[1]))
    for k in range(6):
        step = h * np.maximum(1.0, np.abs(base[k]))
        up = base.copy()
        dn = base.copy()
        up[k] += step
        dn[k] -= step
        _, gu, _ = pieces(up[0] + 1j * up[1], up[2] + 1j * up[3], up[4], up[5], Q)
        _, gd, _ = pieces(dn[0] + 1j * dn[1], dn[2] + 1j * dn[3], dn[4], dn[5], Q)
        H[:, :, k] = (gu - gd) / (2 * step)
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    return np.moveaxis(H, 3, 1)


def hessian(cfg: BellmanConfig, pts, h: float = 1e-5) -> np.ndarray:
    """Numerical Hessian of ``B``; shape ``(m, 6, 6)``."""
    return np.tensordot(cfg.coefficients, piece_hessians(pts, cfg.Q, h), axes=1)


def _min_product_form(S, angles=36, refine=2):
    """Minimum over unit ``u, v`` in the plane of ``2 sqrt(S_uu S_vv) + 2 S_uv``.

    ``S`` has shape ``(m, 4, 4)`` on ``(x1, x2, y1, y2)``; the expression is
    the minimum over ``rho > 0`` of ``S`` evaluated at ``(rho u, v / rho)``.
    The two angles are minimised on a grid followed by local refinement.
    """
    m = S.shape[0]
    Sxx, Syy, Sxy = S[:, :2, :2], S[:, 2:, 2:], S[:, :2, 2:]

    def form(a, b):
        ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
        suu = Sxx[:, 0, 0] * ca * ca + 2 * Sxx[:, 0, 1] * ca * sa + Sxx[:, 1, 1] * sa * sa
        svv = Syy[:, 0, 0] * cb * cb + 2 * Syy[:, 0, 1] * cb * sb + Syy[:, 1, 1] * sb * sb
        suv = (Sxy[:, 0, 0] * ca * cb + Sxy[:, 0, 1] * ca * sb
               + Sxy[:, 1, 0] * sa * cb + Sxy[:, 1, 1] * sa * sb)
        val = 2 * np.sqrt(np.maximum(suu, 0) * np.maximum(svv, 0)) + 2 * suv
        # a negative diagonal makes the scaled form unbounded below
        return np.where((suu < 0) | (svv < 0), -np.inf, val)

    best = np.full(m, np.inf)
    ba = np.zeros(m)
    bb = np.zeros(m)
    grid = np.linspace(0, 2 * np.pi, angles, endpoint=False)
    for a in grid:
        for b in grid:
            val = form(a, b)
            upd = val < best
            best = np.where(upd, val, best)
            ba = np.where(upd, a, ba)
            bb = np.where(upd, b, bb)
    width = 2 * np.pi / angles
    for _ in range(refine):
        ca, cb = ba.copy(), bb.copy()
        for da in np.linspace(-width, width, 9):
            for db in np.linspace(-width, width, 9):
                val = form(ca + da, cb + db)
                upd = val < best
                best = np.where(upd, val, best)
                ba = np.where(upd, ca + da, ba)
                bb = np.where(upd, cb + db, bb)
        width /= 4
    return best


def _local_ratios(H, Q):
    """Second-variation ratios to ``(2/Q)|dx||dy|`` for Hessians ``H`` of shape ``(m, 6, 6)``.

    Returns ``(full, xy)``: ``xy`` varies only ``(dx, dy)``, ``full`` also
    minimises over ``(dr, ds)`` through a Schur complement, which is the
    infinitesimal form of the one-leg inequality.
    """
    A = H[:, :4, :4]
    Bm = H[:, :4, 4:]
    Cm = H[:, 4:, 4:]
    pd = np.linalg.eigvalsh(Cm)[:, 0] > 0
    Cs = np.where(pd[:, None, None], Cm, np.eye(2))
    S = A - Bm @ np.linalg.solve(Cs, np.swapaxes(Bm, 1, 2))
    # without a positive (r, s) block the infimum over (dr, ds) is -inf
    full = np.where(pd, _min_product_form(S), -np.inf) / (2.0 / Q)
    xy = _min_product_form(A) / (2.0 / Q)
    return full, xy


def hessian_margin(cfg: BellmanConfig, pts, h: float = 1e-5) -> dict:
    """Worst local convexity ratios at ``pts`` (see :func:`_local_ratios`)."""
    full, xy = _local_ratios(hessian(cfg, pts, h), cfg.Q)
    return {"full": float(full.min()), "xy": float(xy.min()),
            "argmin": int(np.argmin(full)), "margin": float(full.min() - 1.0)}


def _boundary_gap(x, y, r, s, Q):
    a, b = np.abs(x), np.abs(y)
    _, _, K, _ = _profiles(r * s, Q)
    g1 = np.abs(b * r - a * K) / (b * r + a * K)
    g2 = np.abs(a * s - b * K) / (a * s + b * K)
    return np.minimum(g1, g2)


def sample_interior(n_per_piece: int, Q: float, eps: float, rng, h: float = 1e-5,
                    max_rounds: int = 200) -> dict:
    """Points of each ``B4`` case lying more than ``10 h`` from every case boundary.

    Returns a dict keyed by case label (``interior``, ``x_only``, ``y_only``).
    """
    want = (1, 2, 3)
    got = {k: [] for k in want}
    count = dict.fromkeys(want, 0)
    for _ in range(max_rounds):
        if all(count[k] >= n_per_piece for k in want):
            break
        x, y, r, s = sample_domain(4 * n_per_piece, Q, eps, rng)
        _, _, label = pieces(x, y, r, s, Q)
        far = _boundary_gap(x, y, r, s, Q) > 10 * h
        far &= (np.abs(x) > 10 * h) & (np.abs(y) > 10 * h)
        # keep the difference stencil inside the domain
        for f in (1 + 10 * h, 1 - 10 * h):
            far &= in_domain(x, y, r * f, s * f, Q, eps)
            far &= in_domain(x, y, r * f, s / f, Q, eps)
        for k in want:
            sel = far & (label == k)
            got[k].append((x[sel], y[sel], r[sel], s[sel]))
            count[k] += int(sel.sum())
    return {PIECE_LABELS[k]: tuple(np.concatenate([p[i] for p in parts])[:n_per_piece]
                                   for i in range(4))
            for k, parts in got.items()}


def gradient_fd_error(cfg: BellmanConfig, pts, h: float = 1e-6) -> np.ndarray:
    """Per-point ``max |grad - fd| / max |grad|`` with central differences of step ``h``."""
    x, y, r, s = pts
    _, g, _ = value_and_gradient(x, y, r, s, cfg, check=False)
    base = _stack_points(pts)
    fd = np.empty_like(g)
    for k in range(6):
        up = base.copy()
        dn = base.copy()
        up[k] += h
        dn[k] -= h
        bu, _, _ = value_and_gradient(up[0] + 1j * up[1], up[2] + 1j * up[3], up[4], up[5],
                                      cfg, check=False)
        bd, _, _ = value_and_gradient(dn[0] + 1j * dn[1], dn[2] + 1j * dn[3], dn[4], dn[5],
                                      cfg, check=False)
        fd[k] = (bu - bd) / (2 * h)
    return np.abs(g - fd).max(axis=0) / np.abs(g).max(axis=0)


class SampleSet:
    """Sampled points, pairs and interior points with per-piece data cached.

    Parameters
    ----------
    Q, eps : float
    seed : int
    n_points, n_pairs, n_hessian : int
        Budgets for the pointwise properties, the one-leg pairs and the
        interior points of each ``B4`` case.
    """

    def __init__(self, Q, eps, seed=0, n_points=100_000, n_pairs=1_000_000,
                 n_hessian=10_000):
        rng = np.random.default_rng(seed)
        self.Q, self.eps, self.seed = float(Q), float(eps), seed
        self.points = sample_domain(n_points, Q, eps, rng)
        self.V, self.V0 = sample_pairs(n_pairs, Q, eps, rng)
        self.interior = sample_interior(n_hessian, Q, eps, rng)

        x, y, r, s = self.points
        self.pt_vals, self.pt_grads, _ = pieces(x, y, r, s, Q)
        self.b1 = np.abs(x) ** 2 / r + np.abs(y) ** 2 / s
        self.sign_norm = np.abs(x) ** 2 / r ** 2 + np.abs(y) ** 2 / s ** 2
        self.err_rhs = np.abs(x) * np.abs(y) / Q
        self.err_lhs = _pairing(np.moveaxis(self.pt_grads, 1, 0), x, y, r, s)

        self.gaps = piece_gaps(self.V, self.V0, Q)
        self.rhs = 2.0 / Q * np.abs(self.V[0] - self.V0[0]) * np.abs(self.V[1] - self.V0[1])
        self.gap_scale = np.abs(self.V[0]) ** 2 / self.V[2] + np.abs(self.V[1]) ** 2 / self.V[3] + 1.0
        self.hess = {k: piece_hessians(p, Q) for k, p in self.interior.items()}

    @property
    def sizes(self) -> dict:
        return {"points": len(self.points[0]), "pairs": len(self.V[0]),
                "hessian_per_piece": {k: len(p[0]) for k, p in self.interior.items()}}

    def _point(self, pts, i):
        return {"x": [float(pts[0][i].real), float(pts[0][i].imag)],
                "y": [float(pts[1][i].real), float(pts[1][i].imag)],
                "r": float(pts[2][i]), "s": float(pts[3][i])}

    def evaluate(self, C) -> tuple[dict, dict]:
        """Margins and diagnostic details for constants ``C``."""
        C = np.asarray(C, dtype=float)
        val = C @ self.pt_vals
        grad = np.tensordot(C, self.pt_grads, axes=1)

        keep = self.b1 > 0
        ratio = np.where(keep, val / np.where(keep, self.b1, 1), 0.0)
        c_size = float(C.sum())
        i_size = int(np.argmax(ratio))
        size_margin = 1.0 - ratio[i_size] / c_size

        keep_s = self.sign_norm > 0
        sg = np.where(keep_s, np.minimum(-grad[4], -grad[5]) / np.where(keep_s, self.sign_norm, 1),
                      np.inf)
        i_sign = int(np.argmin(sg))

        keep_e = self.err_rhs > 0
        er = np.where(keep_e, (C @ self.err_lhs) / np.where(keep_e, self.err_rhs, 1), np.inf)
        i_err = int(np.argmin(er))

        gap = C @ self.gaps
        pos = self.rhs > 1e-9 * self.gap_scale
        leg = np.where(pos, gap / np.where(pos, self.rhs, 1), np.inf)
        i_leg = int(np.argmin(leg))
        floor = float((gap[~pos] / self.gap_scale[~pos]).min(initial=0.0))

        hess = {}
        for k, Hp in self.hess.items():
            full, xy = _local_ratios(np.tensordot(C, Hp, axes=1), self.Q)
            j = int(np.argmin(full))
            hess[k] = {"full": float(full[j]), "xy": float(xy.min()),
                       "witness": self._point(self.interior[k], j)}
        conv = min(h["full"] for h in hess.values())

        margins = {"size": float(size_margin), "signs": float(sg[i_sign]),
                   # a negative gap at dx*dy = 0 is a convexity failure too
                   "one_leg": float(leg[i_leg] - 1.0) if floor >= -1e-12 else floor,
                   "convexity": conv - 1.0, "error": float(er[i_err])}
        details = {"C_size": c_size, "c_err": float(er[i_err]),
                   "size_lower": float(ratio[keep].min()), "size_upper": float(ratio[i_size]),
                   "one_leg_ratio": float(leg[i_leg]), "convex_floor": floor,
                   "hessian": hess,
                   "witness": {"size": self._point(self.points, i_size),
                               "signs": self._point(self.points, i_sign),
                               "error": self._point(self.points, i_err),
                               "one_leg": {"V": self._point(self.V, i_leg),
                                           "V0": self._point(self.V0, i_leg)},
                               "convexity": min(hess.values(), key=lambda h: h["full"])["witness"]}}
        return margins, details


@dataclass
class Certificate:
    """Worst-case margins of every sampled property for one set of constants.

    ``margins`` holds one entry per property, each strictly positive when
    that property passed with room to spare:

    * ``size``: ``1 - max(B/B1) / sum(C)``.
    * ``signs``: worst of ``-dB/dr`` and ``-dB/ds`` over ``|x|^2/r^2 + |y|^2/s^2``.
    * ``one_leg``: worst ratio of the Bregman gap to ``(2/Q)|dx||dy|``, minus one.
    * ``convexity``: worst local second-variation ratio, minus one.
    * ``error``: worst ratio ``Re[dB.V] / (|x||y|/Q)``.
    """

    Q: float
    eps: float
    C: list
    margins: dict
    samples: dict
    seed: int
    C_size: float
    c_err: float
    rounds: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v > 0 for v in self.margins.values())

    @property
    def one_leg_constant(self) -> float:
        """``c`` in the verified ``gap >= (c/Q)|dx||dy|``."""
        return 2.0

    @property
    def one_step_constant(self) -> float:
        """Constant of the one-step inequality implied by the certified properties.

        Symmetrising the Bregman gap over each pair of points bounds the
        jump part by ``Q / (2c)`` times the bracket; the error estimate bounds
        the killing part by ``Q / c_err`` times the bracket.
        """
        return max(1.0 / (2 * self.one_leg_constant), 1.0 / self.c_err)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _certificate(samples: SampleSet, C) -> Certificate:
    margins, details = samples.evaluate(C)
    return Certificate(samples.Q, samples.eps, [float(c) for c in C], margins, samples.sizes,
                       samples.seed, details["C_size"], details["c_err"], [], details)


def certify(cfg: BellmanConfig, seed: int = 0, n_points: int = 100_000,
            n_pairs: int = 1_000_000, n_hessian: int = 10_000) -> Certificate:
    """Evaluate every property for ``cfg`` on fresh samples drawn from ``seed``."""
    return _certificate(SampleSet(cfg.Q, cfg.eps, seed, n_points, n_pairs, n_hessian), cfg.C)


# property -> which constants a failure raises
_REMEDY = {"size": "c1", "signs": "c1", "error": "c1",
           "one_leg": "coupling", "convexity": "coupling"}
_ORDER = ("size", "signs", "error", "one_leg", "convexity")


def calibrate_constants(Q: float, eps: float, seed: int = 0, n_points: int = 100_000,
                        n_pairs: int = 1_000_000, n_hessian: int = 10_000,
                        max_rounds: int = 16, q_min: float = Q_MIN,
                        start=(1.0,) * 6):
    """Search for constants making every sampled property hold with margin.

    Starts from ``start``. Each round evaluates all properties on one fixed
    sample set. A failure of size, signs or the error estimate doubles
    ``C1``; a failure of one-leg or Hessian convexity doubles ``C2 .. C6``
    together. Raising ``C1`` alone cannot repair convexity, because ``B1`` is
    affine along moves that keep ``x/r`` and ``y/s`` fixed.

    Returns
    -------
    cfg : BellmanConfig
    certificate : Certificate

    Raises
    ------
    CalibrationFailed
        After ``max_rounds`` unsuccessful rounds, naming the first failing
        property and its witness.
    """
    cfg = BellmanConfig(Q, eps, tuple(start), q_min)
    samples = SampleSet(Q, eps, seed, n_points, n_pairs, n_hessian)
    history = []
    for _ in range(max_rounds):
        cert = _certificate(samples, cfg.C)
        history.append({"C": list(cfg.C), "margins": dict(cert.margins)})
        failing = [p for p in _ORDER if not cert.margins[p] > 0]
        if not failing:
            cert.rounds = history
            return cfg, cert
        C = np.array(cfg.C)
        if any(_REMEDY[p] == "c1" for p in failing):
            C[0] *= 2
        if any(_REMEDY[p] == "coupling" for p in failing):
            C[1:] *= 2
        cfg = cfg.with_constants(C)
    first = failing[0]
    raise CalibrationFailed(first, cert.details["witness"].get(first, {}),
                            f"'{first}' still fails after {max_rounds} rounds "
                            f"(margin {cert.margins[first]:.3e}, C = {list(cfg.C)})")


# --------------------------------------------------------------------------
# integrability and Lipschitz audit on finite spaces

def derivative_bounds_check(f, g, v1, v2, cfg: BellmanConfig, mu=None,
                            rng: np.random.Generator | None = None,
                            segments: int = 32) -> dict:
    """Measured norms of the composed derivative fields.

    Parameters
    ----------
    f, g : complex vectors
    v1, v2 : positive vectors with the pair ``(v1, v2)`` inside the domain
    mu : point masses, default counting measure

    Returns
    -------
    dict
        ``l1_dr``, ``l1_ds``: ``L1(mu)`` norms of ``dB/dr`` and ``dB/ds``;
        ``l2_ratio_x``, ``l2_ratio_y``: ``||dB/dx||^2 / (||f||^2 + ||g||^2)``
        and the same for ``y``; ``lipschitz_r``, ``lipschitz_s``: largest
        ``|change of dB/dr| / ((|x|^2 + |y|^2)(|dr| + |ds|))`` along random
        segments in ``(r, s)``.
    """
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    mu = np.ones(f.size) if mu is None else np.asarray(mu, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    _, grad, _ = value_and_gradient(f, g, v1, v2, cfg)
    energy = np.sum(mu * (np.abs(f) ** 2 + np.abs(g) ** 2))
    dx2 = np.sum(mu * (grad[0] ** 2 + grad[1] ** 2))
    dy2 = np.sum(mu * (grad[2] ** 2 + grad[3] ** 2))
    out = {"l1_dr": float(np.sum(mu * np.abs(grad[4]))),
           "l1_ds": float(np.sum(mu * np.abs(grad[5]))),
           "l2_ratio_x": float(dx2 / energy) if energy > 0 else 0.0,
           "l2_ratio_y": float(dy2 / energy) if energy > 0 else 0.0}
    lip_r = lip_s = 0.0
    for i in range(f.size):
        mass = abs(f[i]) ** 2 + abs(g[i]) ** 2
        if mass == 0:
            continue
        r2, s2 = sample_domain(segments, cfg.Q, cfg.eps, rng)[2:]
        _, ga, _ = value_and_gradient(f[i], g[i], v1[i], v2[i], cfg, check=False)
        _, gb, _ = value_and_gradient(np.full(segments, f[i]), np.full(segments, g[i]),
                                      r2, s2, cfg, check=False)
        step = np.abs(r2 - v1[i]) + np.abs(s2 - v2[i])
        keep = step > 0
        lip_r = max(lip_r, float((np.abs(gb[4] - ga[4])[keep] / (mass * step[keep])).max(initial=0)))
        lip_s = max(lip_s, float((np.abs(gb[5] - ga[5])[keep] / (mass * step[keep])).max(initial=0)))
    out["lipschitz_r"] = lip_r
    out["lipschitz_s"] = lip_s
    return out
