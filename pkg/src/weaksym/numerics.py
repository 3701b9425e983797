"""Numeric kernels: adaptive Gauss-Legendre quadrature, RK4, power-law fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    pass


class BlowUpError(ArithmeticError):
    """Trajectory left the finite region (|y| > escape bound)."""

    def __init__(self, message: str, at: float | None = None):
        super().__init__(message)
        self.at = at


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 16
    tol: float = 1e-10
    # relative part: threshold is max(tol, rtol * integral of |f|)
    rtol: float = 0.0
    max_panels: int = 2**14
    # cap on panels refined in one sweep over all problems (memory guard)
    max_active: int = 2**19
    # fixed breakpoints (1D) in the integration variable
    hints: tuple = ()
    # half-width of a layer around each moving hint (2D)
    layer_width: float = 0.0

    def with_(self, **kw) -> "QuadratureSpec":
        d = dict(self.__dict__)
        d.update(kw)
        return QuadratureSpec(**d)


@dataclass
class QuadResult:
    value: float
    error: float
    converged: bool
    panels: int
    evaluations: int = 0

    def __float__(self):
        return self.value


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _panel_sums(f, lo, hi, prob, order):
    """GL sums of f on panels [lo, hi]; returns (value, abs value)."""
    x, w = gauss_legendre(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel(), np.repeat(prob, order)), dtype=float).reshape(pts.shape)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("integrand is not finite at a quadrature node")
    return half * (vals @ w), half * (np.abs(vals) @ w)


def adaptive_batch(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    prob: np.ndarray,
    nprob: int,
    spec: QuadratureSpec,
    scale_floor: float = 0.0,
    pooled: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    """Integrate many 1D problems at once, breadth first.

    Problem ``k`` is the union of the initial panels with ``prob == k``.
    ``f(x, k)`` is called on flat arrays of nodes and problem indices. Each
    panel is compared with the sum over its two halves; a panel is accepted
    when the difference is below its share (by length) of the threshold.
    ``max_panels`` applies per problem; ``scale_floor`` bounds the relative
    scale from below (used by the 2D driver to share a global scale).
    Returns (values, error estimates, converged flags, panels, evaluations).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    prob = np.asarray(prob, dtype=np.int64)
    keep = hi > lo
    lo, hi, prob = lo[keep], hi[keep], prob[keep]
    order = spec.order
    total = np.zeros(nprob)
    err = np.zeros(nprob)
    ok = np.ones(nprob, dtype=bool)
    length = np.bincount(prob, weights=hi - lo, minlength=nprob)
    if lo.size == 0:
        return total, err, ok, 0, 0
    coarse, cabs = _panel_sums(f, lo, hi, prob, order)
    scale = np.maximum(np.bincount(prob, weights=cabs, minlength=nprob), scale_floor)
    if pooled:
        scale[:] = scale.max()
    count = np.bincount(prob, minlength=nprob)
    evals = lo.size * order
    while lo.size:
        if lo.size > spec.max_active:
            np.add.at(total, prob, coarse)
            np.add.at(err, prob, np.abs(coarse))
            ok[np.unique(prob)] = False
            break
        mid = 0.5 * (lo + hi)
        lr_lo = np.concatenate([lo, mid])
        lr_hi = np.concatenate([mid, hi])
        lr_p = np.concatenate([prob, prob])
        v, a = _panel_sums(f, lr_lo, lr_hi, lr_p, order)
        evals += lr_lo.size * order
        n = lo.size
        vl, vr = v[:n], v[n:]
        fine = vl + vr
        fabs = a[:n] + a[n:]
        e = np.abs(fine - coarse)
        thr = np.maximum(spec.tol, spec.rtol * scale[prob]) * (hi - lo) / np.where(length[prob] > 0, length[prob], 1.0)
        floor = 64 * np.finfo(float).eps * fabs
        tiny = (hi - lo) <= 1e-14 * np.maximum(1.0, np.abs(mid))
        acc = (e <= np.maximum(thr, floor)) | tiny
        np.add.at(total, prob[acc], fine[acc])
        np.add.at(err, prob[acc], e[acc])
        rej = ~acc
        if not rej.any():
            break
        count += np.bincount(prob[rej], minlength=nprob)
        over = rej & (count[prob] > spec.max_panels)
        if over.any():
            # keep best estimates, flag the problems that did not converge
            np.add.at(total, prob[over], fine[over])
            np.add.at(err, prob[over], e[over])
            ok[np.unique(prob[over])] = False
            rej &= ~over
            if not rej.any():
                break
        lo = np.concatenate([lo[rej], mid[rej]])
        hi = np.concatenate([mid[rej], hi[rej]])
        prob = np.concatenate([prob[rej], prob[rej]])
        coarse = np.concatenate([vl[rej], vr[rej]])
    return total, err, ok, int(count.sum()), evals


def _initial_panels(a: float, b: float, hints: Sequence[float]) -> np.ndarray:
    pts = [a, b] + [h for h in hints if a < h < b]
    return np.unique(np.asarray(pts, dtype=float))


def integrate(f: Callable, domain, spec: QuadratureSpec | None = None, strict: bool = False, **kw) -> QuadResult:
    """Adaptive Gauss-Legendre integral of a vectorized ``f``.

    ``domain`` is an interval ``(a, b)`` or, for 2D, a pair
    ``((x_lo, x_hi), (t_lo, t_hi))`` where the inner bounds may be callables
    of the outer variable; ``f(x, t)`` is then integrated over x inside t.
    2D keywords: ``layers`` (callables t -> x positions of thin layers).
    With ``strict`` a non-converged integral raises ``QuadratureError``.
    """
    spec = spec or QuadratureSpec()
    if len(domain) == 2 and np.ndim(domain[0]) == 0 and not callable(domain[0]):
        a, b = float(domain[0]), float(domain[1])
        sign = 1.0
        if b < a:
            a, b, sign = b, a, -1.0
        bp = _initial_panels(a, b, spec.hints)
        lo, hi = bp[:-1], bp[1:]
        tot, err, ok, panels, evals = adaptive_batch(lambda x, k: f(x), lo, hi, np.zeros(lo.size, int), 1, spec)
        res = QuadResult(sign * float(tot[0]), float(err[0]), bool(ok[0]), panels, evals)
    else:
        res = _integrate_2d(f, domain[0], domain[1], spec, kw.get("layers", ()))
    if strict and not res.converged:
        raise QuadratureError(f"quadrature did not converge within {spec.max_panels} panels")
    return res


def _bounds(xb, ts):
    if callable(xb):
        lo, hi = xb(ts)
        return np.broadcast_to(np.asarray(lo, float), ts.shape), np.broadcast_to(np.asarray(hi, float), ts.shape)
    return np.full(ts.shape, float(xb[0])), np.full(ts.shape, float(xb[1]))


def _integrate_2d(f, x_dom, t_dom, spec: QuadratureSpec, layers) -> QuadResult:
    t0, t1 = float(t_dom[0]), float(t_dom[1])
    stats = {"evals": 0, "panels": 0, "ok": True, "err": 0.0, "scale": 0.0}
    w = spec.layer_width

    def inner(ts: np.ndarray) -> np.ndarray:
        xlo, xhi = _bounds(x_dom, ts)
        cols = [xlo, xhi]
        for h in layers:
            c = np.broadcast_to(np.asarray(h(ts), float), ts.shape)
            cols += [c - w, c, c + w] if w > 0 else [c]
        bp = np.column_stack(cols)
        bp = np.clip(bp, xlo[:, None], xhi[:, None])
        bp.sort(axis=1)
        lo = bp[:, :-1].ravel()
        hi = bp[:, 1:].ravel()
        prob = np.repeat(np.arange(ts.size), bp.shape[1] - 1)
        tot, err, ok, panels, evals = adaptive_batch(
            lambda x, k: f(x, ts[k]), lo, hi, prob, ts.size, spec, scale_floor=stats["scale"], pooled=True
        )
        stats["scale"] = max(stats["scale"], float(np.abs(tot).max(initial=0.0)))
        stats["evals"] += evals
        stats["panels"] += panels
        stats["ok"] &= bool(ok.all())
        stats["err"] = max(stats["err"], float(err.max(initial=0.0)))
        return tot

    bp = _initial_panels(t0, t1, spec.hints)
    tot, err, ok, panels, evals = adaptive_batch(lambda t, k: inner(t), bp[:-1], bp[1:], np.zeros(bp.size - 1, int), 1, spec)
    return QuadResult(
        float(tot[0]),
        float(err[0]) + stats["err"] * (t1 - t0),
        bool(ok[0]) and stats["ok"],
        panels,
        stats["evals"],
    )


# ---------------------------------------------------------------------------
# ODEs


def rk4_solve(
    rhs: Callable,
    y0,
    span: tuple[float, float],
    steps: int,
    escape: float = 1e12,
    trajectory: bool = False,
):
    """Classical fixed-step RK4 for y' = rhs(s, y); y may be a vector or matrix."""
    s0, s1 = float(span[0]), float(span[1])
    y = np.array(y0, dtype=float, copy=True)
    if steps <= 0:
        raise ValueError("steps must be positive")
    h = (s1 - s0) / steps
    path = [y.copy()] if trajectory else None
    s = s0
    for i in range(steps):
        k1 = np.asarray(rhs(s, y), dtype=float)
        k2 = np.asarray(rhs(s + h / 2, y + h / 2 * k1), dtype=float)
        k3 = np.asarray(rhs(s + h / 2, y + h / 2 * k2), dtype=float)
        k4 = np.asarray(rhs(s + h, y + h * k3), dtype=float)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        s = s0 + (i + 1) * h
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > escape:
            raise BlowUpError(f"solution escaped at s = {s:.6g}", at=s)
        if trajectory:
            path.append(y.copy())
    return (y, np.array(path)) if trajectory else y


# ---------------------------------------------------------------------------
# power laws


@dataclass
class PowerLawFit:
    slope: float
    intercept: float
    residual: float
    span: tuple = field(default=(math.nan, math.nan))
    defined: bool = True

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_power_law(xs, ys) -> PowerLawFit:
    """Least-squares line through (log x, log y): y ~ C x^slope."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size or xs.size < 4:
        raise ValueError("need at least 4 paired points")
    d = np.diff(xs)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("xs must be strictly monotone")
    span = (float(xs.min()), float(xs.max()))
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        log.warning("power-law fit undefined: non-positive or non-finite data")
        return PowerLawFit(math.nan, math.nan, math.nan, span, defined=False)
    lx, ly = np.log(xs), np.log(ys)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.linalg.norm(A @ coef - ly))
    return PowerLawFit(float(coef[0]), float(coef[1]), res, span)


# ---------------------------------------------------------------------------
# 2x2 eigen decomposition


def eig2(a, b, c, d):
    """Eigenpairs of [[a, b], [c, d]] (arrays allowed) with real, distinct eigenvalues.

    Returns (lam1, lam2, r1, r2, l1, l2) with lam1 < lam2 and l_i . r_i = 1.
    Right vectors use whichever of (b, lam - a) and (lam - d, c) is better
    conditioned.
    """
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    tr = a + d
    disc = (a - d) ** 2 + 4 * b * c
    if np.any(disc <= 0):
        raise ArithmeticError("matrix is not strictly hyperbolic (discriminant <= 0)")
    root = np.sqrt(disc)
    lams = ((tr - root) / 2, (tr + root) / 2)
    rights, lefts = [], []
    for lam in lams:
        r1 = np.stack([b, lam - a])
        r2 = np.stack([lam - d, c])
        use1 = np.linalg.norm(r1, axis=0) >= np.linalg.norm(r2, axis=0)
        r = np.where(use1, r1, r2)
        # left eigenvector: right eigenvector of A^T
        l1 = np.stack([c, lam - a])
        l2 = np.stack([lam - d, b])
        usel = np.linalg.norm(l1, axis=0) >= np.linalg.norm(l2, axis=0)
        l = np.where(usel, l1, l2)
        l = l / np.sum(l * r, axis=0)
        rights.append(r)
        lefts.append(l)
    return lams[0], lams[1], rights[0], rights[1], lefts[0], lefts[1]
