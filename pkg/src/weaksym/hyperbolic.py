"""Characteristic fields and the reduced determining system for 2x2 hyperbolic systems.

For U_t + A(U) U_x = 0 with U = (u, v) a candidate generator
xi(x,t) d_x + tau(x,t) d_t + phi d_u + psi d_v is checked against

    [phi_t; psi_t] + A [phi_x; psi_x] = 0                           (first)
    [A, B] + phi A_u + psi A_v = (xi I - tau A)_t + (xi I - tau A)_x A  (second)
    M_t + M_x A = 0,  M = B + xi_x I - tau_x A                      (reduced)

with B the (u, v)-Jacobian of (phi, psi). The reduced equation follows
from the other two by differentiation but is not equivalent to them, so
all three residuals are reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import (
    ONE,
    ZERO,
    Const,
    ExprError,
    add,
    call,
    differentiate,
    div,
    is_zero,
    lambdify,
    mul,
    normalize,
    SQRT,
    sub,
    wrap,
)


class HyperbolicityError(ExprError):
    """The matrix is not strictly hyperbolic on the sampled region."""


def _mm(P, R):
    n = len(P)
    return [[add(*(mul(P[i][k], R[k][j]) for k in range(n))) for j in range(n)] for i in range(n)]


def _sample(rng, names, box, n):
    lo = np.array([box.get(k, (-1.0, 1.0))[0] for k in names], dtype=float)
    hi = np.array([box.get(k, (-1.0, 1.0))[1] for k in names], dtype=float)
    return rng.uniform(lo, hi, size=(n, len(names)))


def _max_abs(exprs, names, pts) -> float:
    worst = 0.0
    for e in exprs:
        e = normalize(e)
        if e == ZERO:
            continue
        v = np.broadcast_to(lambdify(e, names)(*pts.T), (pts.shape[0],))
        worst = max(worst, float(np.max(np.abs(v))))
    return worst


@dataclass
class CharacteristicFields:
    """lambda_1 < lambda_2 with right/left vectors normalized so l_i . r_i = 1."""

    names: tuple
    lam: tuple
    r: tuple
    l: tuple
    gap: float
    defect: float
    box: dict = field(default_factory=dict)

    def evaluate(self, points) -> tuple:
        """Numeric (lam, r, l) at rows of ``points`` in (u, v)."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        m = P.shape[0]

        def ev(e):
            return np.broadcast_to(lambdify(e, self.names)(*P.T), (m,))

        lam = np.stack([ev(e) for e in self.lam])
        r = np.stack([np.stack([ev(e) for e in vec]) for vec in self.r])
        l = np.stack([np.stack([ev(e) for e in vec]) for vec in self.l])
        return lam, r, l


def characteristic_fields(
    A: Sequence[Sequence],
    names: Sequence[str] = ("u", "v"),
    box: dict | None = None,
    samples: int = 100,
    rng: np.random.Generator | None = None,
    tol: float = 1e-9,
) -> CharacteristicFields:
    """Closed-form eigenpairs of a 2x2 matrix of Exprs in (u, v).

    lambda = (tr -+ sqrt(disc))/2 with disc = (a - d)^2 + 4bc. Right vectors
    are (b, lambda - a) when b is not identically zero, else
    (lambda - d, c); a diagonal matrix uses unit vectors. The defects
    |A r - lambda r| and |l^T A - lambda l^T| are measured at samples.
    """
    names = tuple(names)
    box = dict(box or {})
    rng = rng if rng is not None else np.random.default_rng(42)
    (a, b), (c, d) = [[normalize(wrap(e)) for e in row] for row in A]
    disc = normalize(add(mul(sub(a, d), sub(a, d)), mul(4, b, c)))
    pts = _sample(rng, names, box, samples)
    dv = np.broadcast_to(lambdify(disc, names)(*pts.T), (samples,))
    if np.any(dv <= 0):
        k = int(np.argmin(dv))
        raise HyperbolicityError(f"discriminant {dv[k]:.3g} <= 0 at {dict(zip(names, pts[k].tolist()))}")
    root = call(SQRT, [disc])
    tr = add(a, d)
    lams = (mul(Const(0.5), sub(tr, root)), mul(Const(0.5), add(tr, root)))
    lams = tuple(normalize(e) for e in lams)
    b_zero = is_zero(b, ranges=box)
    c_zero = is_zero(c, ranges=box)
    rs, ls = [], []
    for i, lam in enumerate(lams):
        if b_zero and c_zero:
            # diagonal: order the unit vectors to match lambda_1 < lambda_2
            av = np.broadcast_to(lambdify(a, names)(*pts.T), (samples,))
            dvv = np.broadcast_to(lambdify(d, names)(*pts.T), (samples,))
            first_is_a = bool(np.all(av < dvv))
            if not first_is_a and not np.all(av > dvv):
                raise HyperbolicityError("diagonal entries cross on the sampled region")
            e1 = (ONE, ZERO) if (i == 0) == first_is_a else (ZERO, ONE)
            rs.append(e1)
            ls.append(e1)
            continue
        two = sub(sub(mul(2, lam), a), d)
        if not b_zero:
            r = (b, sub(lam, a))
            l = (div(sub(lam, d), mul(b, two)), div(b, mul(b, two)))
        else:
            r = (sub(lam, d), c)
            l = (div(c, mul(c, two)), div(sub(lam, a), mul(c, two)))
        rs.append(tuple(normalize(e) for e in r))
        ls.append(tuple(normalize(e) for e in l))
    defects = []
    for lam, r, l in zip(lams, rs, ls):
        defects.append(add(mul(a, r[0]), mul(b, r[1]), mul(-1, lam, r[0])))
        defects.append(add(mul(c, r[0]), mul(d, r[1]), mul(-1, lam, r[1])))
        defects.append(add(mul(l[0], a), mul(l[1], c), mul(-1, lam, l[0])))
        defects.append(add(mul(l[0], b), mul(l[1], d), mul(-1, lam, l[1])))
    norm = [sub(add(mul(l[0], r[0]), mul(l[1], r[1])), ONE) for r, l in zip(rs, ls)]
    defect = _max_abs(defects + norm, names, pts)
    if defect > tol:
        raise HyperbolicityError(f"eigenpair defect {defect:.3g} exceeds {tol}")
    gap = float(np.min(np.sqrt(dv)))
    return CharacteristicFields(names, lams, tuple(rs), tuple(ls), gap, defect, box)


@dataclass
class HyperbolicReport:
    first: float
    second: float
    reduced: float
    relations: float | None
    samples: int

    def passed(self, tol: float = 1e-10) -> dict:
        out = {"first": self.first <= tol, "second": self.second <= tol, "reduced": self.reduced <= tol}
        if self.relations is not None:
            out["relations"] = self.relations <= tol
        return out

    def to_record(self) -> dict:
        rec = {"first": self.first, "second": self.second, "reduced": self.reduced, "samples": self.samples}
        if self.relations is not None:
            rec["relations"] = self.relations
        return rec


def hyperbolic_equations(A, xi, tau, phi, psi, indep=("x", "t"), names=("u", "v")) -> dict:
    """Residual Exprs of (first), (second), (reduced) and the matrix M."""
    x, t = indep
    u, v = names
    A = [[normalize(wrap(e)) for e in row] for row in A]
    xi, tau, phi, psi = (normalize(wrap(e)) for e in (xi, tau, phi, psi))
    I = [[ONE, ZERO], [ZERO, ONE]]
    W = (phi, psi)
    first = [add(differentiate(W[i], t), *(mul(A[i][k], differentiate(W[k], x)) for k in range(2))) for i in range(2)]
    B = [[differentiate(W[i], n) for n in names] for i in range(2)]
    K = [[sub(mul(xi, I[i][j]), mul(tau, A[i][j])) for j in range(2)] for i in range(2)]
    AB, BA = _mm(A, B), _mm(B, A)
    Kx = [[differentiate(K[i][j], x) for j in range(2)] for i in range(2)]
    KxA = _mm(Kx, A)
    second = []
    for i in range(2):
        for j in range(2):
            lhs = add(AB[i][j], mul(-1, BA[i][j]), mul(phi, differentiate(A[i][j], u)), mul(psi, differentiate(A[i][j], v)))
            second.append(sub(lhs, add(differentiate(K[i][j], t), KxA[i][j])))
    M = [[add(B[i][j], mul(differentiate(xi, x), I[i][j]), mul(-1, differentiate(tau, x), A[i][j])) for j in range(2)] for i in range(2)]
    MxA = _mm([[differentiate(M[i][j], x) for j in range(2)] for i in range(2)], A)
    reduced = [add(differentiate(M[i][j], t), MxA[i][j]) for i in range(2) for j in range(2)]
    return {"first": first, "second": second, "reduced": reduced, "M": M}


def characteristic_candidate(fields: CharacteristicFields, alphas: Sequence, indep=("x", "t"), arg: str = "s") -> tuple:
    """(phi, psi) = sum_i alpha_i(x - t lambda_i, u, v) r_i.

    ``alphas`` are Exprs in ``arg`` (the characteristic variable) and (u, v).
    """
    from .expr import Sym, substitute

    x, t = (Sym(n) for n in indep)
    comps = [ZERO, ZERO]
    for alpha, lam, r in zip(alphas, fields.lam, fields.r):
        a = substitute(wrap(alpha), {arg: sub(x, mul(t, lam))})
        comps = [add(comps[j], mul(a, r[j])) for j in range(2)]
    return tuple(normalize(c) for c in comps)


def verify_hyperbolic_reduction(
    A,
    xi,
    tau,
    phi,
    psi,
    samples: int = 100,
    rng: np.random.Generator | None = None,
    box: dict | None = None,
    betas: Sequence | None = None,
    fields: CharacteristicFields | None = None,
    indep=("x", "t"),
    names=("u", "v"),
) -> HyperbolicReport:
    """Sampled residuals of (first), (second), (reduced) and optionally the relations block.

    With ``betas`` (two 2-vectors of Exprs in (x, t, u, v), already composed
    with x - t lambda_i) and characteristic ``fields`` the relations
    M_jk = sum_i beta^j_i l^k_i are checked as well.
    """
    rng = rng if rng is not None else np.random.default_rng(42)
    box = dict(box or {})
    allnames = tuple(indep) + tuple(names)
    eqs = hyperbolic_equations(A, xi, tau, phi, psi, indep, names)
    pts = _sample(rng, allnames, box, samples)
    rel = None
    if betas is not None:
        if fields is None:
            raise ExprError("the relations block needs characteristic fields")
        diffs = []
        for j in range(2):
            for k in range(2):
                s = add(*(mul(wrap(betas[i][j]), fields.l[i][k]) for i in range(2)))
                diffs.append(sub(eqs["M"][j][k], s))
        rel = _max_abs(diffs, allnames, pts)
    return HyperbolicReport(
        _max_abs(eqs["first"], allnames, pts),
        _max_abs(eqs["second"], allnames, pts),
        _max_abs(eqs["reduced"], allnames, pts),
        rel,
        samples,
    )


__all__ = [
    "CharacteristicFields",
    "HyperbolicReport",
    "HyperbolicityError",
    "characteristic_candidate",
    "characteristic_fields",
    "hyperbolic_equations",
    "verify_hyperbolic_reduction",
]
