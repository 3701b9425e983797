"""Factor matrices Q(eta, z) with Delta(pr g_eta z) = Q(eta, z) Delta(z).

Three independent constructions are provided: the tau-integral over the
solved form, the principal matrix solution of dQ/deta = Qtilde(pr g_eta z) Q,
and (in tests) closed forms. Infinitesimal factors Qtilde and determining
equations come from prolonged vector fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .expr import (
    ONE,
    ZERO,
    Add,
    Const,
    DomainError,
    Expr,
    ExprError,
    Mul,
    Pow,
    Sym,
    add,
    differentiate,
    div,
    evaluate_array,
    expand,
    is_zero,
    lambdify,
    mul,
    normalize,
    render,
    sub,
    substitute,
    wrap,
)
from .jet import (
    GroupAction,
    JetSpec,
    ProlongedAction,
    VectorField,
    _inverse_matrix,
    apply_prolonged_field,
    prolong_function,
    prolong_group_action,
    prolong_vector_field,
    total_derivative,
    total_derivative_multi,
)
from .numerics import gauss_legendre, rk4_solve
from .system import LINEAR, SEMILINEAR, PDESystem, linear_coefficients

ETA_X = "eta-x"
ETA_X_U = "eta-x-u"
FULL_JET = "full-jet"

TAU = Sym("tau")


class FactorizationError(ExprError):
    """A requested factorization does not exist or cannot be built."""


class NotASymmetryError(FactorizationError):
    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


def _ysym(j: int) -> Sym:
    return Sym(f"_y{j}")


def _sample_jets(rng, spec: JetSpec, n: int, box: dict | None = None) -> np.ndarray:
    box = box or {}
    lo = np.array([box.get(c, (-2.0, 2.0))[0] for c in spec.coords], dtype=float)
    hi = np.array([box.get(c, (-2.0, 2.0))[1] for c in spec.coords], dtype=float)
    return rng.uniform(lo, hi, size=(n, spec.N))


def _eval_all(exprs: Sequence[Expr], names: Sequence[str], cols: Sequence[np.ndarray], m: int) -> np.ndarray:
    out = np.empty((m, len(exprs)))
    for k, e in enumerate(exprs):
        out[:, k] = np.broadcast_to(evaluate_array(e, names, *cols), (m,))
    return out


# ---------------------------------------------------------------------------
# solved form


@dataclass
class SolvedForm:
    """Delta~(z) = (z', Delta(z)) and its inverse.

    ``inverse`` holds z'' as Exprs in (z', _y0.._y{s-1}) when Delta is affine
    in the solved coordinates; otherwise None and ``inverse_numeric`` runs
    Newton's method per point.
    """

    system: PDESystem
    jacobian: list
    det: Expr
    inverse: tuple | None
    newton_iters: int = 20
    newton_tol: float = 1e-12

    @property
    def closed_form(self) -> bool:
        return self.inverse is not None

    @property
    def spec(self) -> JetSpec:
        return self.system.spec

    def forward(self, Z: np.ndarray) -> np.ndarray:
        sp = self.spec
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        Y = Z.copy()
        vals = _eval_all(self.system.equations, sp.coords, Z.T, Z.shape[0])
        for j, k in enumerate(self.system.solved_indices):
            Y[:, k] = vals[:, j]
        return Y

    def inverse_numeric(self, Y: np.ndarray) -> np.ndarray:
        sp = self.spec
        sys = self.system
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        m = Y.shape[0]
        idx = list(sys.solved_indices)
        target = Y[:, idx]
        Z = Y.copy()
        if self.closed_form:
            names = sys.other_coords() + tuple(_ysym(j).name for j in range(sys.s))
            others = [Y[:, sp.index(c)] for c in sys.other_coords()]
            cols = others + [target[:, j] for j in range(sys.s)]
            Z[:, idx] = _eval_all(self.inverse, names, cols, m)
            return Z
        # Newton seeded from the affine approximation at z'' = 0
        Z[:, idx] = 0.0
        Z[:, idx] = self._newton_step(Z, target)
        for _ in range(self.newton_iters):
            new = self._newton_step(Z, target)
            delta = np.max(np.abs(new - Z[:, idx]), axis=1)
            Z[:, idx] = new
            if np.all(delta <= self.newton_tol * (1 + np.max(np.abs(new), axis=1))):
                break
        resid = self.forward(Z)[:, idx] - target
        bad = np.max(np.abs(resid), axis=1) > 1e-9 * (1 + np.max(np.abs(target), axis=1))
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise DomainError(f"Newton inverse of the solved form failed at y = {Y[i].tolist()}")
        return Z

    def _newton_step(self, Z, target) -> np.ndarray:
        sp = self.spec
        sys = self.system
        m = Z.shape[0]
        idx = list(sys.solved_indices)
        vals = _eval_all(sys.equations, sp.coords, Z.T, m)
        J = np.empty((m, sys.s, sys.s))
        for i in range(sys.s):
            J[:, i, :] = _eval_all(self.jacobian[i], sp.coords, Z.T, m)
        step = np.linalg.solve(J, (target - vals)[..., None])[..., 0]
        return Z[:, idx] + step

    def round_trip(self, rng: np.random.Generator, samples: int = 50, tol: float = 1e-9, box: dict | None = None) -> float:
        """max |Delta~^-1(Delta~(z)) - z| at random jets; also checks det != 0 there."""
        sp = self.spec
        Z = _sample_jets(rng, sp, samples, box)
        d = np.broadcast_to(evaluate_array(self.det, sp.coords, *Z.T), (samples,)) if self.det is not None else None
        if d is not None and np.any(d == 0):
            i = int(np.nonzero(d == 0)[0][0])
            raise DomainError(f"solved-coordinate Jacobian is singular at z = {Z[i].tolist()}")
        back = self.inverse_numeric(self.forward(Z))
        err = float(np.max(np.abs(back - Z)))
        if err > tol:
            raise DomainError(f"solved form round trip error {err:.3g} exceeds {tol}")
        return err


def _det(M: list) -> Expr:
    if len(M) <= 3:
        try:
            return _inverse_matrix(M)[1]
        except ZeroDivisionError:
            return ZERO
    # cofactor expansion along the first row
    return add(*(mul((-1) ** j, M[0][j], _det([row[:j] + row[j + 1 :] for row in M[1:]])) for j in range(len(M))))


def _depends(e: Expr, name: str, ranges=None) -> bool:
    if name not in e.free_symbols:
        return False
    try:
        return not is_zero(differentiate(e, name), ranges=ranges)
    except (DomainError, ExprError):
        return True


def build_solved_form(sys: PDESystem, newton_iters: int = 20, newton_tol: float = 1e-12) -> SolvedForm:
    """Delta~ with a closed-form inverse when Delta is affine in the solved coordinates.

    Affine systems (linear, semilinear, quasilinear and every
    Delta_i = c_i z_{k_i} + F_i(z') form) invert as
    z'' = A''(z')^{-1} (y'' - Delta(z', 0)).
    """
    solved = sys.solved
    J = [[normalize(differentiate(e, c)) for c in solved] for e in sys.equations]
    det = normalize(_det(J))
    if det == ZERO:
        raise FactorizationError("the Jacobian with respect to the solved coordinates vanishes identically")
    affine = all(not _depends(J[i][j], c) for i in range(sys.s) for j in range(sys.s) for c in solved)
    if not affine:
        return SolvedForm(sys, J, det, None, newton_iters, newton_tol)
    zero = {c: ZERO for c in solved}
    rest = [substitute(e, zero) for e in sys.equations]
    A = [[substitute(J[i][j], zero) for j in range(sys.s)] for i in range(sys.s)]
    if sys.s <= 3:
        Ainv, _ = _inverse_matrix(A)
    else:
        raise FactorizationError("closed-form inversion is implemented for s <= 3")
    rhs = [sub(_ysym(j), rest[j]) for j in range(sys.s)]
    inv = tuple(normalize(add(*(mul(Ainv[i][j], rhs[j]) for j in range(sys.s)))) for i in range(sys.s))
    return SolvedForm(sys, J, det, inv, newton_iters, newton_tol)


# ---------------------------------------------------------------------------
# factor matrices


@dataclass
class FactorMatrix:
    """s x s factor as Exprs in (eta, z) and/or a numeric evaluator.

    ``evaluate(eta, Z)`` returns an array of shape (m, s, s). Without eta
    dependence (infinitesimal factors) ``eta`` is ignored.
    """

    spec: JetSpec
    s: int
    entries: list | None = None
    numeric: Callable | None = None
    dependence: str = ETA_X
    method: str = "closed-form"
    box: dict = field(default_factory=dict)
    name: str = "Q"

    @property
    def names(self) -> tuple:
        return ("eta",) + self.spec.coords

    def evaluate(self, eta, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        m = Z.shape[0]
        if self.entries is None:
            return self.numeric(np.broadcast_to(np.asarray(eta, dtype=float), (m,)), Z)
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (m,))
        cols = [eta] + [Z[:, k] for k in range(Z.shape[1])]
        out = np.empty((m, self.s, self.s))
        for i in range(self.s):
            for j in range(self.s):
                out[:, i, j] = np.broadcast_to(evaluate_array(self.entries[i][j], self.names, *cols), (m,))
        return out

    def rendered(self) -> list:
        if self.entries is None:
            return []
        return [[render(e) for e in row] for row in self.entries]

    def check_identity(self, rng: np.random.Generator, samples: int = 20, tol: float = 1e-10) -> float:
        """max |Q(0, z) - I| at sample jets."""
        Z = _sample_jets(rng, self.spec, samples, self.box)
        Q = self.evaluate(0.0, Z)
        err = float(np.max(np.abs(Q - np.eye(self.s))))
        if err > tol:
            raise FactorizationError(f"Q(0, z) differs from the identity by {err:.3g}")
        return err


def dependence_class(exprs: Sequence[Expr], spec: JetSpec, ranges=None) -> str:
    """Semantic free-symbol scan: which jet coordinates does the factor really depend on?"""
    used = set()
    for e in exprs:
        for name in e.free_symbols:
            if spec.is_jet(name) and _depends(e, name, ranges):
                used.add(name)
    if any(spec.jet_order(n) > 0 for n in used):
        return FULL_JET
    if used:
        return ETA_X_U
    return ETA_X


def _tau_polynomial(e: Expr, max_terms: int = 4000) -> dict | None:
    """Coefficients {k: c_k} with e = sum c_k tau^k, or None when not polynomial."""
    if "tau" not in e.free_symbols:
        return {0: e}
    try:
        ex = expand(e, max_terms=max_terms)
    except ExprError:
        return None
    out: dict[int, list] = {}
    for t in ex.terms if isinstance(ex, Add) else (ex,):
        k = 0
        rest = []
        for f in t.factors if isinstance(t, Mul) else (t,):
            if f == TAU:
                k += 1
            elif isinstance(f, Pow) and f.base == TAU and f.exp.denominator == 1 and f.exp > 0:
                k += int(f.exp)
            elif "tau" in f.free_symbols:
                return None
            else:
                rest.append(f)
        out.setdefault(k, []).append(mul(*rest) if rest else ONE)
    return {k: add(*v) for k, v in out.items()}


def _f_eta(sys: PDESystem, pa: ProlongedAction) -> list:
    return [substitute(e, pa.coords) for e in sys.equations]


def compute_factor_Q(
    sys: PDESystem, g: GroupAction, order: int = 32, box: dict | None = None, tau_rule: str = "auto"
) -> FactorMatrix:
    """Q(eta, z) = int_0^1 J_k(f_eta o Delta~^-1)(z', tau Delta(z)) dtau, f_eta = Delta o pr g_eta.

    With ``tau_rule="auto"`` integrands polynomial in tau are integrated
    exactly term by term; otherwise (or with ``"gauss"``) Gauss-Legendre of
    the given order is applied per point.
    """
    if tau_rule not in ("auto", "gauss"):
        raise ValueError(f"unknown tau rule {tau_rule!r}")
    sp = sys.spec
    pa = prolong_group_action(g, sp)
    sf = build_solved_form(sys)
    f_eta = _f_eta(sys, pa)
    s = sys.s
    box = dict(box or g.box)
    if sf.closed_form:
        back = dict(zip(sys.solved, sf.inverse))
        G = [substitute(f, back) for f in f_eta]
        J = [[differentiate(G[i], _ysym(j)) for j in range(s)] for i in range(s)]
        on_path = {_ysym(j).name: mul(TAU, sys.equations[j]) for j in range(s)}
        integrand = [[normalize(substitute(J[i][j], on_path)) for j in range(s)] for i in range(s)]
        polys = [[_tau_polynomial(e) for e in row] for row in integrand]
        if tau_rule == "auto" and all(p is not None for row in polys for p in row):
            entries = [
                [normalize(add(*(mul(Const(Fraction(1, k + 1)), c) for k, c in p.items()))) for p in row] for row in polys
            ]
            dep = dependence_class([e for row in entries for e in row], sp, _ranges(g, box))
            return FactorMatrix(sp, s, entries, None, dep, "exact-tau", box)
        dep = dependence_class([e for row in integrand for e in row], sp, _ranges(g, box))
        fns = [[lambdify(e, ("tau", "eta") + sp.coords) for e in row] for row in integrand]

        def numeric(eta, Z):
            x, w = gauss_legendre(order)
            nodes, weights = 0.5 * (x + 1.0), 0.5 * w
            m = Z.shape[0]
            out = np.zeros((m, s, s))
            cols = [Z[:, k] for k in range(Z.shape[1])]
            for tn, tw in zip(nodes, weights):
                tcol = np.full(m, tn)
                with np.errstate(all="raise"):
                    try:
                        for i in range(s):
                            for j in range(s):
                                out[:, i, j] += tw * np.broadcast_to(fns[i][j](tcol, eta, *cols), (m,))
                    except FloatingPointError as exc:
                        raise DomainError(f"factor integrand left its domain on the tau segment: {exc}") from None
            return out

        return FactorMatrix(sp, s, None, numeric, dep, "gauss-legendre", box)
    return _general_factor(sys, sf, f_eta, order, box, g)


def _ranges(g: GroupAction, box: dict) -> dict:
    r = {"eta": g.eta_range}
    r.update(box)
    return r


def _general_factor(sys: PDESystem, sf: SolvedForm, f_eta: list, order: int, box: dict, g: GroupAction) -> FactorMatrix:
    """Numeric Q for systems that are not affine in the solved coordinates.

    J_k(f_eta o Delta~^-1) = (d f_eta / d z'') (J_k Delta)^-1 at z = Delta~^-1(z', tau Delta(z)).
    """
    sp = sys.spec
    s = sys.s
    names = ("eta",) + sp.coords
    dF = [[lambdify(differentiate(f, c), names) for c in sys.solved] for f in f_eta]
    idx = list(sys.solved_indices)

    def numeric(eta, Z):
        x, w = gauss_legendre(order)
        nodes, weights = 0.5 * (x + 1.0), 0.5 * w
        m = Z.shape[0]
        base = sf.forward(Z)
        out = np.zeros((m, s, s))
        for tn, tw in zip(nodes, weights):
            Y = base.copy()
            Y[:, idx] = tn * base[:, idx]
            P = sf.inverse_numeric(Y)
            cols = [eta] + [P[:, k] for k in range(P.shape[1])]
            Df = np.empty((m, s, s))
            for i in range(s):
                for j in range(s):
                    Df[:, i, j] = np.broadcast_to(dF[i][j](*cols), (m,))
            JD = np.empty((m, s, s))
            for i in range(s):
                JD[:, i, :] = _eval_all(sf.jacobian[i], sp.coords, P.T, m)
            out += tw * np.einsum("mij,mjk->mik", Df, np.linalg.inv(JD))
        return out

    dep = dependence_class([differentiate(f, c) for f in f_eta for c in sys.solved], sp, _ranges(g, box))
    return FactorMatrix(sp, s, None, numeric, dep, "newton-gauss-legendre", box)


def quasilinear_closed_form_factor(sys: PDESystem, g: GroupAction, box: dict | None = None) -> FactorMatrix:
    """(Xi1_x I - Xi2_x A(Phi)) Phi_u / (Xi1_x Xi2_t - Xi1_t Xi2_x) for u_t + A(u) u_x.

    Valid for projectable actions linear in u with Xi2 independent of x; the
    formula is evaluated as written, whatever the action.
    """
    sp = sys.spec
    A = sys.quasilinear_matrix()
    x, t = sp.indep
    X1, X2 = g.Xi
    moved = dict(zip(sp.dep, g.Phi))
    A_eta = [[substitute(e, moved) for e in row] for row in A]
    Pu = [[differentiate(g.Phi[i], sp.dep[j]) for j in range(sp.q)] for i in range(sp.q)]
    x1x, x1t, x2x, x2t = (differentiate(X1, x), differentiate(X1, t), differentiate(X2, x), differentiate(X2, t))
    det = sub(mul(x1x, x2t), mul(x1t, x2x))
    s = sp.q
    L = [[sub(mul(x1x, ONE if i == j else ZERO), mul(x2x, A_eta[i][j])) for j in range(s)] for i in range(s)]
    rows = [[normalize(div(add(*(mul(L[i][k], Pu[k][j]) for k in range(s))), det)) for j in range(s)] for i in range(s)]
    dep = dependence_class([e for row in rows for e in row], sp, _ranges(g, dict(box or g.box)))
    return FactorMatrix(sp, s, rows, None, dep, "quasilinear-closed-form", dict(box or g.box), "Q_ql")


def closed_form_factor(sys: PDESystem, entries: Sequence[Sequence], box: dict | None = None, name: str = "Q") -> FactorMatrix:
    """Wrap user-supplied factor Exprs in (eta, z)."""
    rows = [[normalize(wrap(e)) for e in row] for row in entries]
    dep = dependence_class([e for row in rows for e in row], sys.spec)
    return FactorMatrix(sys.spec, sys.s, rows, None, dep, "closed-form", dict(box or {}), name)


# ---------------------------------------------------------------------------
# verification


@dataclass
class FactorizationReport:
    max_residual: float
    samples: int
    resampled: int
    passed: bool
    functional_residual: float | None = None
    tol: float = 1e-8

    def to_record(self) -> dict:
        rec = {"max_residual": self.max_residual, "samples": self.samples, "resampled": self.resampled, "passed": self.passed}
        if self.functional_residual is not None:
            rec["functional_residual"] = self.functional_residual
        return rec


def sample_action_domain(
    pa: ProlongedAction, rng: np.random.Generator, samples: int, eta_range, box: dict | None = None, extra=None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Random (eta, z) with finite pr g_eta(z); points leaving the action domain are redrawn.

    ``extra(eta, Z)`` may return a boolean mask of additionally acceptable rows.
    """
    sp = pa.spec
    etas, Zs, Ms = [], [], []
    have = 0
    dropped = 0
    for _ in range(50):
        n = max(2 * (samples - have), 8)
        eta = rng.uniform(eta_range[0], eta_range[1], size=n)
        Z = _sample_jets(rng, sp, n, box)
        with np.errstate(all="ignore"):
            try:
                M = _apply_quiet(pa, eta, Z)
            except DomainError:
                M = np.full_like(Z, np.nan)
        ok = np.all(np.isfinite(M), axis=1)
        if extra is not None:
            ok &= extra(eta, Z)
        dropped += int((~ok).sum())
        etas.append(eta[ok])
        Zs.append(Z[ok])
        Ms.append(M[ok])
        have += int(ok.sum())
        if have >= samples:
            break
    if have < samples:
        raise DomainError(f"only {have} of {samples} samples stayed in the action domain")
    cat = lambda a: np.concatenate(a)[:samples]  # noqa: E731
    return cat(etas), cat(Zs), cat(Ms), dropped


def _apply_quiet(pa: ProlongedAction, eta, Z) -> np.ndarray:
    """pr g_eta(z) with numeric faults mapped to NaN rows."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    eta = np.broadcast_to(np.asarray(eta, dtype=float), Z.shape[:1])
    out = np.empty_like(Z)
    cols = [eta] + [Z[:, k] for k in range(Z.shape[1])]
    with np.errstate(all="ignore"):
        for k, c in enumerate(pa.spec.coords):
            fn = lambdify(pa.coords[c], pa.names())
            out[:, k] = np.broadcast_to(fn(*cols), Z.shape[:1])
    return out


def _delta_values(sys: PDESystem, Z: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        out = np.empty((Z.shape[0], sys.s))
        for i, e in enumerate(sys.equations):
            out[:, i] = np.broadcast_to(lambdify(e, sys.spec.coords)(*Z.T), Z.shape[:1])
    return out


def verify_factorization(
    sys: PDESystem,
    g: GroupAction,
    Q: FactorMatrix,
    samples: int = 200,
    eta_range=None,
    rng: np.random.Generator | None = None,
    tol: float = 1e-8,
    box: dict | None = None,
    functional: bool = True,
) -> FactorizationReport:
    """max |Delta(pr g_eta z) - Q(eta, z) Delta(z)| over random (eta, z).

    With ``functional`` the identity is also checked on a random quadratic
    u(x) by transforming the graph and differentiating the result directly,
    which bypasses the prolongation formulas.
    """
    rng = rng if rng is not None else np.random.default_rng(42)
    eta_range = eta_range or g.eta_range
    box = dict(box if box is not None else g.box)
    pa = prolong_group_action(g, sys.spec)
    eta, Z, M, dropped = sample_action_domain(pa, rng, samples, eta_range, box, _factor_ok(Q))
    lhs = _delta_values(sys, M)
    rhs = np.einsum("mij,mj->mi", Q.evaluate(eta, Z), _delta_values(sys, Z))
    res = float(np.max(np.abs(lhs - rhs)))
    fres = None
    if functional:
        fres = functional_factor_check(sys, g, Q, rng, eta_range=eta_range, box=box)
    passed = res <= tol and (fres is None or fres <= tol)
    return FactorizationReport(res, samples, dropped, passed, fres, tol)


def _factor_ok(Q: FactorMatrix):
    def ok(eta, Z):
        with np.errstate(all="ignore"):
            try:
                v = Q.evaluate(eta, Z)
            except (DomainError, FloatingPointError):
                return np.array([_row_ok(Q, e, z) for e, z in zip(eta, Z)])
        return np.all(np.isfinite(v.reshape(v.shape[0], -1)), axis=1)

    return ok


def _row_ok(Q: FactorMatrix, eta, z) -> bool:
    try:
        with np.errstate(all="ignore"):
            return bool(np.all(np.isfinite(Q.evaluate(eta, z[None, :]))))
    except (DomainError, FloatingPointError):
        return False


def functional_factor_check(
    sys: PDESystem,
    g: GroupAction,
    Q: FactorMatrix,
    rng: np.random.Generator,
    trials: int = 4,
    points: int = 10,
    eta_range=None,
    box: dict | None = None,
) -> float:
    """Delta(x~, pr(g_eta u)(x~)) - Q(eta, x, pr u(x)) Delta(x, pr u(x)) for random quadratics u.

    g_eta u is built as Phi_eta(x, u(x)) composed with x = Xi_{-eta}(x~) and
    differentiated symbolically in x~.
    """
    sp = sys.spec
    eta_range = eta_range or g.eta_range
    box = box or {}
    worst = 0.0
    xs = [Sym(x) for x in sp.indep]
    for _ in range(trials):
        u = []
        for _a in range(sp.q):
            c = rng.uniform(-0.5, 0.5, size=(sp.p + 1, sp.p + 1))
            terms = [Const(_frac(c[0, 0]))]
            for i in range(sp.p):
                terms.append(mul(Const(_frac(c[0, i + 1])), xs[i]))
                for j in range(i, sp.p):
                    terms.append(mul(Const(_frac(c[i + 1, j + 1])), xs[i], xs[j]))
            u.append(add(*terms))
        eta = float(rng.uniform(*eta_range))
        ev = {"eta": Const(_frac(eta))}
        inv = {x: substitute(e, ev) for x, e in zip(sp.indep, g.inverse_Xi())}
        u_at = {a: substitute(ua, inv) for a, ua in zip(sp.dep, u)}
        m = dict(inv)
        m.update(u_at)
        moved = [substitute(substitute(P, ev), m) for P in g.Phi]
        jets_new = prolong_function(moved, sp)
        jets_old = prolong_function(u, sp)
        lo = np.array([box.get(x, (-1.0, 1.0))[0] for x in sp.indep])
        hi = np.array([box.get(x, (-1.0, 1.0))[1] for x in sp.indep])
        X = rng.uniform(lo, hi, size=(points, sp.p))
        with np.errstate(all="ignore"):
            Xt = np.column_stack([np.broadcast_to(lambdify(substitute(e, ev), sp.indep)(*X.T), (points,)) for e in g.Xi])
            Zold = _jets_at(jets_old, sp, X)
            Znew = _jets_at(jets_new, sp, Xt)
            lhs = _delta_values(sys, Znew)
            Qv = Q.evaluate(eta, Zold)
            rhs = np.einsum("mij,mj->mi", Qv, _delta_values(sys, Zold))
        good = np.all(np.isfinite(lhs), axis=1) & np.all(np.isfinite(rhs), axis=1)
        if good.any():
            worst = max(worst, float(np.max(np.abs(lhs[good] - rhs[good]))))
    return worst


def _frac(v: float) -> Fraction:
    return Fraction(v).limit_denominator(10**9)


def _jets_at(jets: dict, sp: JetSpec, X: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], sp.N))
    out[:, : sp.p] = X
    for k, c in enumerate(sp.coords[sp.p :], start=sp.p):
        out[:, k] = np.broadcast_to(lambdify(jets[c], sp.indep)(*X.T), X.shape[:1])
    return out


# ---------------------------------------------------------------------------
# infinitesimal factors and determining equations


def _on_shell(sys: PDESystem, exprs: Sequence[Expr]):
    """Compose with Delta~^-1: returns (P(z', y''), remainder at y'' = 0)."""
    sf = build_solved_form(sys)
    if not sf.closed_form:
        raise FactorizationError("infinitesimal criteria need a system affine in its solved coordinates")
    back = dict(zip(sys.solved, sf.inverse))
    P = [substitute(e, back) for e in exprs]
    zero = {_ysym(j).name: ZERO for j in range(sys.s)}
    R = [normalize(substitute(e, zero)) for e in P]
    return P, R


def prolonged_action_on_system(sys: PDESystem, v: VectorField) -> list:
    """pr v (Delta_i) for every equation."""
    coeffs = prolong_vector_field(v, sys.spec)
    return [normalize(apply_prolonged_field(coeffs, v, e, sys.spec)) for e in sys.equations]


def infinitesimal_factor(
    sys: PDESystem, v: VectorField, rng: np.random.Generator | None = None, ranges: dict | None = None
) -> FactorMatrix:
    """Qtilde with pr v(Delta) = Qtilde Delta, collected from the solved coordinates.

    Raises ``NotASymmetryError`` with a witness when the on-shell remainder
    does not vanish.
    """
    sp = sys.spec
    pv = prolonged_action_on_system(sys, v)
    P, R = _on_shell(sys, pv)
    rng = rng if rng is not None else np.random.default_rng(7)
    for i, r in enumerate(R):
        if not _vanishes(r, rng, ranges):
            raise NotASymmetryError(f"pr v(Delta_{i}) does not vanish on the solution set", _witness(r, rng, ranges))
    Qt = [[normalize(differentiate(P[i], _ysym(j))) for j in range(sys.s)] for i in range(sys.s)]
    for row in Qt:
        for e in row:
            for j in range(sys.s):
                if _depends(e, _ysym(j).name, ranges):
                    raise FactorizationError("pr v(Delta) is not affine in the solved coordinates")
    dep = dependence_class([e for row in Qt for e in row], sp, ranges)
    return FactorMatrix(sp, sys.s, Qt, None, dep, "infinitesimal", dict(ranges or {}), "Qtilde")


def _vanishes(e: Expr, rng, ranges) -> bool:
    try:
        return is_zero(e, rng=rng, ranges=ranges, tol=1e-9)
    except DomainError:
        return False


def _witness(e: Expr, rng, ranges) -> dict:
    names = tuple(sorted(e.free_symbols))
    ranges = ranges or {}
    for _ in range(200):
        pt = {n: float(rng.uniform(*ranges.get(n, (-2.0, 2.0)))) for n in names}
        try:
            val = float(evaluate_array(e, names, *[np.array([pt[n]]) for n in names])[0])
        except (DomainError, ExprError):
            continue
        if math.isfinite(val) and abs(val) > 1e-9:
            pt["residual"] = val
            return pt
    return {}


@dataclass
class Condition:
    """One determining condition: coefficient of ``monomial`` in equation ``equation``."""

    expr: Expr
    equation: int
    monomial: tuple

    def label(self) -> str:
        mono = "*".join(f"{n}^{k}" if k > 1 else n for n, k in self.monomial) or "1"
        return f"eq{self.equation}[{mono}]"


def collect_monomials(e: Expr, variables: Sequence[str], max_terms: int = 20000) -> dict:
    """Polynomial coefficients of ``e`` in ``variables``: {((name, power), ...): coefficient}."""
    vs = set(variables)
    ex = expand(e, max_terms=max_terms)
    groups: dict[tuple, list] = {}
    for t in ex.terms if isinstance(ex, Add) else (ex,):
        powers: dict[str, int] = {}
        rest = []
        for f in t.factors if isinstance(t, Mul) else (t,):
            if isinstance(f, Sym) and f.name in vs:
                powers[f.name] = powers.get(f.name, 0) + 1
            elif isinstance(f, Pow) and isinstance(f.base, Sym) and f.base.name in vs and f.exp.denominator == 1 and f.exp > 0:
                powers[f.base.name] = powers.get(f.base.name, 0) + int(f.exp)
            elif vs & f.free_symbols:
                raise FactorizationError(f"expression is not polynomial in {sorted(vs & f.free_symbols)}")
            else:
                rest.append(f)
        key = tuple(sorted(powers.items()))
        groups.setdefault(key, []).append(mul(*rest) if rest else ONE)
    out = {}
    for k in sorted(groups):
        c = normalize(add(*groups[k]))
        if c != ZERO:
            out[k] = c
    return out


def determining_equations(sys: PDESystem, ansatz: VectorField) -> list:
    """Conditions whose vanishing is equivalent to pr v(Delta) = Qtilde Delta.

    pr v(Delta) is restricted to the solution set (solved coordinates
    replaced via Delta~^-1) and collected by monomials in the remaining
    derivative jets; each coefficient is one condition.
    """
    if sys.classification not in (LINEAR, SEMILINEAR, "quasilinear"):
        raise FactorizationError(f"determining equations are generated for linear, semilinear and quasilinear systems, not {sys.classification}")
    pv = prolonged_action_on_system(sys, ansatz)
    _, R = _on_shell(sys, pv)
    jets = [c for c in sys.spec.derivative_jets() if c not in sys.solved]
    out = []
    for i, r in enumerate(R):
        for mono, coeff in collect_monomials(r, jets).items():
            out.append(Condition(coeff, i, mono))
    return out


def quasilinear_determining_system(sys: PDESystem, ansatz: VectorField) -> tuple[list, list]:
    """The matrix form for u_t + A(u) u_x with v = xi d_x + tau d_t + psi d_u:

    psi_t + A psi_x = 0 and
    [A, psi_u] + sum_i psi^i dA/du^i - (xi_t I - tau_t A) - (xi_x I - tau_x A) A = 0.
    Returned as (vector conditions, matrix conditions).
    """
    sp = sys.spec
    A = sys.quasilinear_matrix()
    s = sp.q
    x, t = sp.indep
    xi, tau = ansatz.xi
    psi = ansatz.phi
    u = sp.dep
    first = [normalize(add(differentiate(psi[i], t), *(mul(A[i][k], differentiate(psi[k], x)) for k in range(s)))) for i in range(s)]
    B = [[differentiate(psi[i], u[j]) for j in range(s)] for i in range(s)]
    I = [[ONE if i == j else ZERO for j in range(s)] for i in range(s)]

    def mm(P, R):
        return [[add(*(mul(P[i][k], R[k][j]) for k in range(s))) for j in range(s)] for i in range(s)]

    AB, BA = mm(A, B), mm(B, A)
    Kt = [[sub(mul(differentiate(xi, t), I[i][j]), mul(differentiate(tau, t), A[i][j])) for j in range(s)] for i in range(s)]
    Kx = [[sub(mul(differentiate(xi, x), I[i][j]), mul(differentiate(tau, x), A[i][j])) for j in range(s)] for i in range(s)]
    KxA = mm(Kx, A)
    second = []
    for i in range(s):
        row = []
        for j in range(s):
            e = add(AB[i][j], mul(-1, BA[i][j]), *(mul(psi[k], differentiate(A[i][j], u[k])) for k in range(s)))
            row.append(normalize(sub(e, add(Kt[i][j], KxA[i][j]))))
        second.append(row)
    return first, second


def check_conditions(conds: Sequence[Condition], names: Sequence[str], rng: np.random.Generator, samples: int = 100, box: dict | None = None, functions=None) -> float:
    """max |condition| over random points (after optional function specialization)."""
    box = box or {}
    lo = np.array([box.get(n, (-2.0, 2.0))[0] for n in names])
    hi = np.array([box.get(n, (-2.0, 2.0))[1] for n in names])
    P = rng.uniform(lo, hi, size=(samples, len(names)))
    worst = 0.0
    for c in conds:
        e = substitute(c.expr, functions=functions) if functions else c.expr
        with np.errstate(all="ignore"):
            v = np.broadcast_to(lambdify(e, names)(*P.T), (samples,))
        good = np.isfinite(v)
        if good.any():
            worst = max(worst, float(np.max(np.abs(v[good]))))
    return worst


# ---------------------------------------------------------------------------
# Berest form for linear systems L u = F


def berest_form(sys: PDESystem, v: VectorField) -> list:
    """[xi D, L]u + L(alpha u + beta) - xi D F computed by commutators of total derivatives.

    Uses Delta = L u - F with L u the part linear in the u-jets. The order
    n+1 jets produced by the commutator must cancel; they are checked and
    dropped. Independent of the prolongation formula for v.
    """
    if sys.classification != LINEAR:
        raise FactorizationError("the Berest form applies to linear systems")
    if not v.linear:
        raise FactorizationError("the vector field must carry a linear decomposition (alpha, beta)")
    sp = sys.spec
    big = sp.extended(1)
    coeffs, a0 = linear_coefficients(sys)
    F = [mul(-1, a) for a in a0]
    xi = v.xi
    out = []
    w = [add(*(mul(xi[j], Sym(big.jet_name(a, (j,)))) for j in range(sp.p))) for a in range(sp.q)]
    lin = [add(*(mul(v.alpha[a][b], Sym(sp.dep[b])) for b in range(sp.q)), v.beta[a]) for a in range(sp.q)]
    top = set(big.jets_of_order(sp.order + 1))
    for i in range(sys.s):
        Lu = add(*(mul(c, Sym(k)) for k, c in coeffs[i].items()))
        xiDLu = add(*(mul(xi[j], total_derivative(Lu, j, big)) for j in range(sp.p)))
        L_w, L_lin = [], []
        for k, c in coeffs[i].items():
            a, J = sp.multi_index(k)
            L_w.append(mul(c, total_derivative_multi(w[a], J, big)))
            L_lin.append(mul(c, total_derivative_multi(lin[a], J, big)))
        xiDF = add(*(mul(xi[j], differentiate(F[i], x)) for j, x in enumerate(sp.indep)))
        e = normalize(add(xiDLu, mul(-1, add(*L_w)), add(*L_lin), mul(-1, xiDF)))
        stray = top & e.free_symbols
        for s_ in sorted(stray):
            if not is_zero(differentiate(e, s_)):
                raise FactorizationError(f"order {sp.order + 1} terms did not cancel in the commutator")
        if stray:
            e = substitute(e, {s_: ZERO for s_ in stray})
        out.append(e)
    return out


# ---------------------------------------------------------------------------
# ODE bridge


def principal_matrix_from_Qtilde(
    Qt: FactorMatrix, g: GroupAction, z, eta: float, steps: int = 400, pa: ProlongedAction | None = None
) -> np.ndarray:
    """RK4 solution of dQ/deta = Qtilde(pr g_eta z) Q with Q(0) = I, for each row of z.

    Returns shape (s, s) for a single point or (m, s, s).
    """
    pa = pa or prolong_group_action(g, Qt.spec)
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    m, s = Z.shape[0], Qt.s

    def rhs(e, Y):
        W = _apply_quiet(pa, e, Z)
        if not np.all(np.isfinite(W)):
            raise DomainError(f"prolonged flow left the action domain at eta = {e:.6g}")
        return np.einsum("mij,mjk->mik", Qt.evaluate(0.0, W), Y)

    Y0 = np.broadcast_to(np.eye(s), (m, s, s)).copy()
    Y = rk4_solve(rhs, Y0, (0.0, float(eta)), steps) if eta != 0 else Y0
    return Y[0] if np.ndim(z) == 1 else Y


def cocycle_defect(Q: FactorMatrix, g: GroupAction, eta1: float, eta2: float, Z, pa: ProlongedAction | None = None) -> float:
    """max |Q(eta1 + eta2, z) - Q(eta2, pr g_eta1 z) Q(eta1, z)|."""
    pa = pa or prolong_group_action(g, Q.spec)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    W = _apply_quiet(pa, eta1, Z)
    lhs = Q.evaluate(eta1 + eta2, Z)
    rhs = np.einsum("mij,mjk->mik", Q.evaluate(eta2, W), Q.evaluate(eta1, Z))
    return float(np.nanmax(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# growth condition on the solved Jacobian


@dataclass
class GrowthA3:
    C: float
    r: float
    witness: dict | None
    samples: int
    constant: bool = False

    @property
    def violated(self) -> bool:
        return self.witness is not None


def check_growth_a3(
    sys: PDESystem,
    K: dict,
    jet_box: dict | None = None,
    samples: int = 4000,
    rng: np.random.Generator | None = None,
    bins: int = 20,
    zero_tol: float = 1e-12,
) -> GrowthA3:
    """Fit |det J_k(Delta)(z)| >= C ((1 + |z_{p+1}|) ... (1 + |z_N|))^-r by sampling.

    The lower envelope of log|det| against log of the weight is taken per
    bin and fitted by least squares; C is then lowered until every sample
    satisfies the bound. A vanishing determinant yields a witness instead.
    """
    sp = sys.spec
    rng = rng if rng is not None else np.random.default_rng(42)
    sf_J = [[normalize(differentiate(e, c)) for c in sys.solved] for e in sys.equations]
    det = normalize(_det(sf_J))
    if isinstance(det, Const):
        v = abs(float(det.value))
        if v == 0:
            return GrowthA3(0.0, math.inf, {"det": 0.0}, 0, True)
        return GrowthA3(v, 0.0, None, 0, True)
    box = dict(jet_box or {})
    box.update(K)
    Z = _sample_jets(rng, sp, samples, box)
    with np.errstate(all="ignore"):
        d = np.abs(np.broadcast_to(lambdify(det, sp.coords)(*Z.T), (samples,)))
    small = d <= zero_tol
    if small.any():
        i = int(np.argmin(d))
        wit = dict(zip(sp.coords, Z[i].tolist()))
        wit["det"] = float(d[i])
        return GrowthA3(0.0, math.inf, wit, samples)
    lw = np.sum(np.log1p(np.abs(Z[:, sp.p :])), axis=1)
    ld = np.log(d)
    edges = np.linspace(lw.min(), lw.max(), bins + 1)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (lw >= a) & (lw <= b)
        if sel.any():
            k = np.argmin(np.where(sel, ld, np.inf))
            xs.append(lw[k])
            ys.append(ld[k])
    if len(xs) >= 2 and np.ptp(xs) > 0:
        slope, _ = np.polyfit(xs, ys, 1)
        r = max(0.0, -float(slope))
    else:
        r = 0.0
    logC = float(np.min(ld + r * lw))
    return GrowthA3(math.exp(logC), r, None, samples)


def injectivity_spot_check(sf: SolvedForm, rng: np.random.Generator, pairs: int = 10000, box: dict | None = None, tol: float = 1e-10) -> int:
    """Collision search: count random pairs z != w with Delta~(z) == Delta~(w) (declared assumption, not a proof)."""
    sp = sf.spec
    Z = _sample_jets(rng, sp, pairs, box)
    W = _sample_jets(rng, sp, pairs, box)
    a, b = sf.forward(Z), sf.forward(W)
    same = np.max(np.abs(a - b), axis=1) <= tol
    differ = np.max(np.abs(Z - W), axis=1) > tol
    return int(np.sum(same & differ))


# ---------------------------------------------------------------------------
# invariance operator K = xi D - alpha


@dataclass
class InvarianceResult:
    residual: float
    exact: bool
    verdict: str
    curve: object | None = None


def invariance_residual_exprs(v: VectorField, u: Sequence[Expr]) -> list:
    """K u - beta = xi . D u - alpha u - beta for smooth u (Exprs in x, or net Exprs)."""
    sp = v.spec
    if not v.linear:
        raise FactorizationError("invariance needs a linear decomposition phi = alpha u + beta")
    xs = sp.indep
    env = {a: e for a, e in zip(sp.dep, u)}
    out = []
    for a in range(sp.q):
        Du = add(*(mul(substitute(v.xi[i], env), differentiate(u[a], x)) for i, x in enumerate(xs)))
        au = add(*(mul(substitute(v.alpha[a][b], env), u[b]) for b in range(sp.q)))
        out.append(normalize(sub(sub(Du, au), substitute(v.beta[a], env))))
    return out


def invariance_check(v: VectorField, u, phi=None, grid=None, samples: int = 100, rng: np.random.Generator | None = None, box: dict | None = None) -> InvarianceResult:
    """Is K u = beta? Smooth Exprs: symbolic or sampled; nets: association verdict of K u_eps - beta.

    ``u`` is a sequence of Exprs in x or a GNet; nets need a test function ``phi``.
    """
    from .colombeau import CONVERGES_TO_ZERO, GNet, weak_residual_curve

    rng = rng if rng is not None else np.random.default_rng(42)
    if isinstance(u, GNet):
        res = invariance_residual_exprs(v, u.components)
        if all(r == ZERO for r in res):
            return InvarianceResult(0.0, True, CONVERGES_TO_ZERO)
        if phi is None:
            raise FactorizationError("net invariance needs a test function")
        sys = _auxiliary_system(v)
        curve = weak_residual_curve(sys, u, phi, grid)
        return InvarianceResult(float(np.max(np.abs(curve.residuals[:, -1]))), False, curve.verdict, curve)
    res = invariance_residual_exprs(v, [wrap(e) for e in u])
    if all(r == ZERO for r in res):
        return InvarianceResult(0.0, True, "invariant")
    names = v.spec.indep
    box = box or {}
    lo = np.array([box.get(n, (-2.0, 2.0))[0] for n in names])
    hi = np.array([box.get(n, (-2.0, 2.0))[1] for n in names])
    X = rng.uniform(lo, hi, size=(samples, len(names)))
    worst = 0.0
    for r in res:
        with np.errstate(all="ignore"):
            val = np.broadcast_to(lambdify(r, names)(*X.T), (samples,))
        worst = max(worst, float(np.nanmax(np.abs(val))))
    return InvarianceResult(worst, False, "invariant" if worst <= 1e-10 else "not-invariant")


def _auxiliary_system(v: VectorField) -> PDESystem:
    """Delta_a = xi . D u^a - alpha u - beta on the first-order jet space."""
    sp = JetSpec(v.spec.indep, v.spec.dep, 1)
    eqs = []
    for a in range(sp.q):
        Du = add(*(mul(v.xi[i], Sym(sp.jet_name(a, (i,)))) for i in range(sp.p)))
        au = add(*(mul(v.alpha[a][b], Sym(sp.dep[b])) for b in range(sp.q)))
        eqs.append(sub(sub(Du, au), v.beta[a]))
    solved = tuple(sp.jet_name(a, (sp.p - 1,)) for a in range(sp.q))
    return PDESystem(sp, tuple(eqs), solved, name="K u - beta")


__all__ = [
    "Condition",
    "ETA_X",
    "ETA_X_U",
    "FULL_JET",
    "FactorMatrix",
    "FactorizationError",
    "FactorizationReport",
    "GrowthA3",
    "InvarianceResult",
    "NotASymmetryError",
    "SolvedForm",
    "berest_form",
    "build_solved_form",
    "check_conditions",
    "check_growth_a3",
    "closed_form_factor",
    "cocycle_defect",
    "collect_monomials",
    "compute_factor_Q",
    "dependence_class",
    "determining_equations",
    "functional_factor_check",
    "infinitesimal_factor",
    "injectivity_spot_check",
    "invariance_check",
    "invariance_residual_exprs",
    "principal_matrix_from_Qtilde",
    "quasilinear_closed_form_factor",
    "prolonged_action_on_system",
    "quasilinear_determining_system",
    "sample_action_domain",
    "verify_factorization",
]
