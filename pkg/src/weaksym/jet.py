"""Jet coordinates, total derivatives, prolongations and flows."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    ONE,
    ZERO,
    Expr,
    ExprError,
    Sym,
    add,
    differentiate,
    div,
    evaluate_array,
    is_zero,
    lambdify,
    mul,
    normalize,
    substitute,
    wrap,
)
from .numerics import BlowUpError, rk4_solve
from .table import Role, SymbolTable


class JetOrderError(ExprError):
    pass


class ProjectabilityError(ExprError):
    pass


class JetSpec:
    """Coordinates z = (x, u, u_J for 1 <= |J| <= n), graded lexicographic.

    Independent variables are single letters; jet names concatenate the
    letters of a nondecreasing multi-index (``u_xt``; ``u_tx`` is an alias).
    """

    def __init__(self, indep: Sequence[str], dep: Sequence[str], order: int):
        self.indep = tuple(indep)
        self.dep = tuple(dep)
        self.order = int(order)
        if any(len(x) != 1 or not x.isalpha() for x in self.indep):
            raise ExprError("independent variables must be single letters")
        if any("_" in u or not u.isidentifier() for u in self.dep):
            raise ExprError("dependent variable names must be identifiers without '_'")
        if len(set(self.indep + self.dep)) != len(self.indep) + len(self.dep):
            raise ExprError("duplicate variable names")
        if self.order < 0:
            raise ExprError("order must be nonnegative")
        coords = list(self.indep) + list(self.dep)
        self._mi: dict[str, tuple[int, tuple]] = {u: (a, ()) for a, u in enumerate(self.dep)}
        for k in range(1, self.order + 1):
            for a, u in enumerate(self.dep):
                for J in itertools.combinations_with_replacement(range(self.p), k):
                    name = self.jet_name(a, J)
                    coords.append(name)
                    self._mi[name] = (a, J)
        self.coords = tuple(coords)
        self._index = {c: i for i, c in enumerate(self.coords)}

    @property
    def p(self) -> int:
        return len(self.indep)

    @property
    def q(self) -> int:
        return len(self.dep)

    @property
    def N(self) -> int:
        return len(self.coords)

    def __repr__(self):
        return f"JetSpec(indep={self.indep}, dep={self.dep}, order={self.order})"

    def __eq__(self, other):
        return isinstance(other, JetSpec) and (self.indep, self.dep, self.order) == (other.indep, other.dep, other.order)

    def __hash__(self):
        return hash((self.indep, self.dep, self.order))

    @staticmethod
    def count(p: int, k: int) -> int:
        return comb(p + k - 1, k)

    def extended(self, extra: int = 1) -> "JetSpec":
        return JetSpec(self.indep, self.dep, self.order + extra)

    def jet_name(self, alpha: int, J: Sequence[int]) -> str:
        J = tuple(sorted(J))
        if not J:
            return self.dep[alpha]
        return self.dep[alpha] + "_" + "".join(self.indep[j] for j in J)

    def canonical(self, name: str) -> str:
        """Canonical spelling of a jet name (``u_tx`` -> ``u_xt``)."""
        if "_" not in name:
            return name
        base, letters = name.split("_", 1)
        if base not in self.dep:
            raise ExprError(f"{name!r} is not a jet coordinate")
        try:
            J = [self.indep.index(c) for c in letters]
        except ValueError:
            raise ExprError(f"{name!r} uses an unknown independent variable") from None
        return self.jet_name(self.dep.index(base), J)

    def multi_index(self, name: str) -> tuple[int, tuple]:
        """(alpha, J) for a jet coordinate."""
        name = self.canonical(name)
        if name not in self._mi:
            raise ExprError(f"{name!r} is not a jet coordinate of order <= {self.order}")
        return self._mi[name]

    def index(self, name: str) -> int:
        return self._index[self.canonical(name)]

    def is_jet(self, name: str) -> bool:
        return name in self._mi

    def jet_order(self, name: str) -> int:
        return len(self._mi[name][1])

    def jets_of_order(self, k: int) -> list[str]:
        return [c for c in self.coords[self.p :] if len(self._mi[c][1]) == k]

    def derivative_jets(self) -> list[str]:
        return [c for c in self.coords[self.p + self.q :]]

    def declare(self, table: SymbolTable) -> SymbolTable:
        table.declare_many(self.indep, Role.INDEPENDENT)
        table.declare_many(self.coords[self.p :], Role.JET)
        return table

    def table(self) -> SymbolTable:
        return self.declare(SymbolTable())

    def symbols(self) -> tuple:
        return tuple(Sym(c) for c in self.coords)


# ---------------------------------------------------------------------------
# total derivatives and prolongation of functions


def total_derivative(e: Expr, i: int, spec: JetSpec) -> Expr:
    """D_i e = e_{x_i} + sum u^a_{J,i} e_{u^a_J}."""
    e = normalize(e)
    x = spec.indep[i]
    parts = [differentiate(e, x)]
    for name in sorted(e.free_symbols):
        if not spec.is_jet(name):
            continue
        de = differentiate(e, name)
        if de == ZERO:
            continue
        a, J = spec._mi[name]
        if len(J) >= spec.order:
            raise JetOrderError(f"D_{x} of {name} needs jets beyond order {spec.order}")
        parts.append(mul(de, Sym(spec.jet_name(a, J + (i,)))))
    return add(*parts)


def total_derivative_multi(e: Expr, J: Sequence[int], spec: JetSpec) -> Expr:
    for i in J:
        e = total_derivative(e, i, spec)
    return e


def prolong_function(u: Sequence, spec: JetSpec) -> dict[str, Expr]:
    """All jet coordinates of the functions ``u`` (Exprs in x) up to the order of ``spec``."""
    u = [normalize(wrap(e)) for e in u]
    if len(u) != spec.q:
        raise ExprError(f"expected {spec.q} component(s)")
    out: dict[str, Expr] = {}
    for name in spec.coords[spec.p :]:
        a, J = spec._mi[name]
        if not J:
            out[name] = u[a]
        else:
            parent = spec.jet_name(a, J[:-1])
            out[name] = differentiate(out[parent], spec.indep[J[-1]])
    return out


# ---------------------------------------------------------------------------
# vector fields


def _depends_on_u(e: Expr, spec: JetSpec) -> bool:
    return any(spec.is_jet(s) for s in e.free_symbols)


@dataclass
class VectorField:
    """v = sum xi_i d/dx_i + sum phi_a d/du^a (projectable).

    ``alpha``/``beta`` optionally record a linear decomposition
    phi = alpha(x) u + beta(x).
    """

    spec: JetSpec
    xi: tuple
    phi: tuple
    alpha: tuple | None = None
    beta: tuple | None = None
    name: str = "v"

    def __post_init__(self):
        self.xi = tuple(normalize(wrap(e)) for e in self.xi)
        self.phi = tuple(normalize(wrap(e)) for e in self.phi)
        if len(self.xi) != self.spec.p or len(self.phi) != self.spec.q:
            raise ExprError("vector field has the wrong number of components")
        for e in self.xi:
            if _depends_on_u(e, self.spec):
                raise ProjectabilityError(f"xi component {e} depends on dependent variables (not projectable)")
        for e in self.phi:
            if any(s in self.spec.coords[self.spec.p + self.spec.q :] for s in e.free_symbols):
                raise ExprError("phi may depend on x and u only")
        if self.alpha is not None:
            self.alpha = tuple(tuple(normalize(wrap(c)) for c in row) for row in self.alpha)
            self.beta = tuple(normalize(wrap(c)) for c in (self.beta or (ZERO,) * self.spec.q))
            for a in range(self.spec.q):
                lin = add(*(mul(self.alpha[a][l], Sym(self.spec.dep[l])) for l in range(self.spec.q)), self.beta[a])
                if not is_zero(self.phi[a] - lin):
                    raise ExprError(f"linear decomposition of phi[{a}] is inconsistent")

    @property
    def linear(self) -> bool:
        return self.alpha is not None

    def evaluator(self):
        names = self.spec.indep + self.spec.dep
        fns = [lambdify(e, names) for e in self.xi + self.phi]

        def rhs(s, y):
            cols = [y[..., k] for k in range(len(names))]
            return np.stack([f(*cols) for f in fns], axis=-1)

        return rhs


def vector_field_from_action(g: "GroupAction", name: str = "v") -> VectorField:
    """Infinitesimal generator: eta-derivatives of the action at eta = 0."""
    at0 = {"eta": ZERO}
    xi = [substitute(differentiate(e, "eta"), at0) for e in g.Xi]
    phi = [substitute(differentiate(e, "eta"), at0) for e in g.Phi]
    alpha = beta = None
    if g.linear:
        alpha = [[substitute(differentiate(c, "eta"), at0) for c in row] for row in g.phi_mat]
        beta = [substitute(differentiate(c, "eta"), at0) for c in g.psi]
    return VectorField(g.spec, tuple(xi), tuple(phi), alpha, beta, name=name)


def prolong_vector_field(v: VectorField, spec: JetSpec | None = None, method: str = "closed") -> dict[str, Expr]:
    """Coefficients Phi^J_a of pr^(n) v for every jet coordinate (order 0..n).

    ``closed``: Phi^J = D_J(phi - sum xi_i u_i) + sum xi_i u_{J,i}, computed on
    the order n+1 jet space; the order n+1 terms must cancel.
    ``recursive``: Phi^{J,i} = D_i Phi^J - sum_l (D_i xi_l) u_{J,l}.
    """
    spec = spec or v.spec
    if method == "recursive":
        return _prolong_recursive(v, spec)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    big = spec.extended(1)
    top = set(big.jets_of_order(spec.order + 1))
    out = {}
    for name in spec.coords[spec.p :]:
        a, J = spec._mi[name]
        Q = add(v.phi[a], *(mul(-1, v.xi[i], Sym(big.jet_name(a, (i,)))) for i in range(spec.p)))
        e = total_derivative_multi(Q, J, big)
        e = add(e, *(mul(v.xi[i], Sym(big.jet_name(a, J + (i,)))) for i in range(spec.p)))
        stray = top & e.free_symbols
        for s in sorted(stray):
            if not is_zero(differentiate(e, s)):
                raise ExprError(f"order {spec.order + 1} terms did not cancel in the coefficient of {name}")
        if stray:
            e = substitute(e, {s: ZERO for s in stray})
        out[name] = e
    return out


def _prolong_recursive(v: VectorField, spec: JetSpec) -> dict[str, Expr]:
    out = {}
    Dxi = [[total_derivative(v.xi[l], i, spec) for l in range(spec.p)] for i in range(spec.p)]
    for name in spec.coords[spec.p :]:
        a, J = spec._mi[name]
        if not J:
            out[name] = v.phi[a]
            continue
        parent, i = spec.jet_name(a, J[:-1]), J[-1]
        e = total_derivative(out[parent], i, spec)
        e = add(e, *(mul(-1, Dxi[i][l], Sym(spec.jet_name(a, J[:-1] + (l,)))) for l in range(spec.p)))
        out[name] = e
    return out


def apply_prolonged_field(coeffs: Mapping[str, Expr], v: VectorField, e: Expr, spec: JetSpec) -> Expr:
    """pr v (e) = sum xi_i e_{x_i} + sum Phi^J e_{u_J}."""
    e = normalize(e)
    parts = [mul(v.xi[i], differentiate(e, x)) for i, x in enumerate(spec.indep)]
    for name in sorted(e.free_symbols):
        if spec.is_jet(name):
            if name not in coeffs:
                raise JetOrderError(f"{name} is beyond the prolongation order")
            parts.append(mul(coeffs[name], differentiate(e, name)))
    return add(*parts)


# ---------------------------------------------------------------------------
# group actions


@dataclass
class GroupAction:
    """Projectable one-parameter action x~ = Xi(eta, x), u~ = Phi(eta, x, u).

    For linear actions ``phi_mat``/``psi`` give Phi = phi_mat(eta, x) u + psi(eta, x).
    ``box`` maps variable names to (lo, hi) sampling ranges for checks.
    """

    spec: JetSpec
    Xi: tuple
    Phi: tuple
    eta_range: tuple = (-0.1, 0.1)
    phi_mat: tuple | None = None
    psi: tuple | None = None
    slowly_increasing: bool = False
    box: dict = field(default_factory=dict)
    name: str = "g"

    def __post_init__(self):
        self.Xi = tuple(normalize(wrap(e)) for e in self.Xi)
        self.Phi = tuple(normalize(wrap(e)) for e in self.Phi)
        sp = self.spec
        if len(self.Xi) != sp.p or len(self.Phi) != sp.q:
            raise ExprError("group action has the wrong number of components")
        for e in self.Xi:
            if _depends_on_u(e, sp):
                raise ProjectabilityError(f"Xi component {e} depends on dependent variables (not projectable)")
        at0 = {"eta": ZERO}
        ident = [(substitute(e, at0), Sym(x)) for e, x in zip(self.Xi, sp.indep)]
        ident += [(substitute(e, at0), Sym(u)) for e, u in zip(self.Phi, sp.dep)]
        for got, want in ident:
            if not is_zero(got - want, ranges=self.box):
                raise ExprError(f"action is not the identity at eta = 0: {got} != {want}")
        if self.phi_mat is not None:
            self.phi_mat = tuple(tuple(normalize(wrap(c)) for c in row) for row in self.phi_mat)
            self.psi = tuple(normalize(wrap(c)) for c in (self.psi or (ZERO,) * sp.q))
            for a in range(sp.q):
                lin = add(*(mul(self.phi_mat[a][l], Sym(sp.dep[l])) for l in range(sp.q)), self.psi[a])
                if not is_zero(self.Phi[a] - lin, ranges=self._ranges()):
                    raise ExprError(f"Phi[{a}] is not phi_mat u + psi")

    def _ranges(self):
        r = {"eta": self.eta_range}
        r.update(self.box)
        return r

    @property
    def linear(self) -> bool:
        return self.phi_mat is not None

    def jacobian(self) -> list[list[Expr]]:
        return [[differentiate(e, x) for x in self.spec.indep] for e in self.Xi]

    def inverse_Xi(self) -> tuple:
        """Xi_eta^{-1} = Xi_{-eta} (one-parameter group property)."""
        return tuple(substitute(e, {"eta": mul(-1, Sym("eta"))}) for e in self.Xi)

    def check_group_inverse(self, rng: np.random.Generator, samples: int = 20, tol: float = 1e-9) -> float:
        """max |Xi_eta(Xi_{-eta}(x)) - x| at random (eta, x) in the box."""
        sp = self.spec
        inv = self.inverse_Xi()
        comp = [substitute(e, dict(zip(sp.indep, inv))) for e in self.Xi]
        worst = 0.0
        names = ("eta",) + sp.indep
        pts = _sample_box(rng, names, self._ranges(), samples)
        for e, x in zip(comp, sp.indep):
            vals = evaluate_array(e, names, *pts.T)
            worst = max(worst, float(np.max(np.abs(vals - pts[:, 1 + sp.indep.index(x)]))))
        if worst > tol:
            raise ExprError(f"Xi_(-eta) is not the inverse of Xi_eta (error {worst:.3g})")
        return worst


def _sample_box(rng, names, ranges, n):
    lo = np.array([ranges.get(k, (-2.0, 2.0))[0] for k in names], dtype=float)
    hi = np.array([ranges.get(k, (-2.0, 2.0))[1] for k in names], dtype=float)
    return rng.uniform(lo, hi, size=(n, len(names)))


def _inverse_matrix(M: list[list[Expr]]) -> tuple[list[list[Expr]], Expr]:
    """Adjugate inverse for p <= 3; returns (inverse, determinant)."""
    n = len(M)
    if n == 1:
        det = M[0][0]
        adj = [[ONE]]
    elif n == 2:
        (a, b), (c, d) = M
        det = add(mul(a, d), mul(-1, b, c))
        adj = [[d, mul(-1, b)], [mul(-1, c), a]]
    elif n == 3:

        def cof(i, j):
            r = [k for k in range(3) if k != i]
            c = [k for k in range(3) if k != j]
            m = add(mul(M[r[0]][c[0]], M[r[1]][c[1]]), mul(-1, M[r[0]][c[1]], M[r[1]][c[0]]))
            return m if (i + j) % 2 == 0 else mul(-1, m)

        det = add(*(mul(M[0][j], cof(0, j)) for j in range(3)))
        adj = [[cof(j, i) for j in range(3)] for i in range(3)]
    else:
        raise ExprError("symbolic Jacobian inversion is limited to p <= 3")
    det = normalize(det)
    if det == ZERO:
        raise ZeroDivisionError("Jacobian determinant normalizes to zero")
    return [[div(adj[i][j], det) for j in range(n)] for i in range(n)], det


@dataclass
class ProlongedAction:
    action: GroupAction
    spec: JetSpec
    coords: dict
    b: dict | None = None
    b0: dict | None = None

    def names(self) -> tuple:
        return ("eta",) + self.spec.coords

    def apply(self, eta, Z: np.ndarray) -> np.ndarray:
        """pr g_eta on rows of Z (shape (m, N)); eta scalar or per-row."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        eta = np.broadcast_to(np.asarray(eta, dtype=float), Z.shape[:1])
        cols = [eta] + [Z[:, k] for k in range(Z.shape[1])]
        out = np.empty_like(Z)
        for k, c in enumerate(self.spec.coords):
            out[:, k] = evaluate_array(self.coords[c], self.names(), *cols)
        return out


def prolong_group_action(g: GroupAction, spec: JetSpec | None = None) -> ProlongedAction:
    """Symbolic prolongation of a projectable action to the order of ``spec``.

    Derivatives transform by D~_a F = sum_j D_j F (J Xi^{-1})_{j a}. Nonlinear
    actions are prolonged to first order only.
    """
    spec = spec or g.spec
    if spec.order > 1 and not g.linear:
        raise JetOrderError("nonlinear actions are prolonged to first order only")
    Jinv, _ = _inverse_matrix(g.jacobian())
    coords: dict[str, Expr] = {}
    for x, e in zip(spec.indep, g.Xi):
        coords[x] = e
    for name in spec.coords[spec.p :]:
        a, J = spec._mi[name]
        if not J:
            coords[name] = g.Phi[a]
            continue
        parent, i = spec.jet_name(a, J[:-1]), J[-1]
        F = coords[parent]
        parts = [mul(total_derivative(F, j, spec), Jinv[j][i]) for j in range(spec.p)]
        coords[name] = add(*parts)
    pa = ProlongedAction(g, spec, coords)
    if g.linear:
        b, b0 = {}, {}
        ujets = spec.coords[spec.p :]
        zero = {c: ZERO for c in ujets}
        for k in ujets:
            e = coords[k]
            b0[k] = substitute(e, zero)
            for l in ujets:
                c = differentiate(e, l)
                if c != ZERO:
                    b[(k, l)] = c
        pa.b, pa.b0 = b, b0
    return pa


# ---------------------------------------------------------------------------
# flows


def flow(v: VectorField, eta: float, start, steps: int = 1024, escape: float = 1e12) -> np.ndarray:
    """Numeric exponentiation exp(eta v) of points (rows of ``start``) in (x, u).

    Fixed-step RK4 with step eta/steps; escape beyond ``escape`` raises
    ``BlowUpError``.
    """
    y0 = np.asarray(start, dtype=float)
    if eta == 0:
        return y0.copy()
    rhs = v.evaluator()
    return rk4_solve(rhs, y0, (0.0, float(eta)), steps, escape=escape)


def jet_values(u_jets: Mapping[str, Expr], spec: JetSpec, points) -> np.ndarray:
    """Evaluate prolonged function jets at points x (shape (m, p)) -> (m, N)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((pts.shape[0], spec.N))
    out[:, : spec.p] = pts
    for k, c in enumerate(spec.coords[spec.p :], start=spec.p):
        out[:, k] = evaluate_array(u_jets[c], spec.indep, *pts.T)
    return out


def numeric_prolonged_generator(v: VectorField, Z: np.ndarray, h: float = 1e-3, deta: float = 1e-3) -> np.ndarray:
    """Oracle for first-order prolongation coefficients without any prolongation algebra.

    For each jet z = (x, u, u_x) the tangent plane through (x, u) with slopes
    u_x is sampled at x + k h e_j (k = +-1, +-2), carried along the numeric
    flow, and the new slopes are read off by 4-point central differences.
    The eta-derivative at 0 is again a 4-point central difference. Flow
    roundoff is amplified like 1/(h deta), hence the moderate default steps.
    Returns (m, q*p) in jet coordinate order.
    """
    spec = v.spec
    p, q = spec.p, spec.q
    if spec.order < 1:
        raise JetOrderError("need a first-order jet space")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    first = [spec.index(spec.jet_name(a, (j,))) for a in range(q) for j in range(p)]
    stencil = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))

    def slopes(eta: float) -> np.ndarray:
        m = Z.shape[0]
        x0, u0 = Z[:, :p], Z[:, p : p + q]
        du = Z[:, first].reshape(m, q, p)
        pts = []
        for j in range(p):
            for k, _ in stencil:
                x = x0.copy()
                x[:, j] += k * h
                pts.append(np.hstack([x, u0 + k * h * du[:, :, j]]))
        moved = flow(v, eta, np.vstack(pts)).reshape(len(pts), m, p + q)
        dX = np.zeros((m, p, p))
        dU = np.zeros((m, q, p))
        for j in range(p):
            d = sum(w * moved[j * 4 + n] for n, (_, w) in enumerate(stencil)) / h
            dX[:, :, j] = d[:, :p]
            dU[:, :, j] = d[:, p:]
        # u~_{x~} = dU dX^{-1}
        return np.einsum("mqj,mja->mqa", dU, np.linalg.inv(dX)).reshape(m, q * p)

    return sum(w * slopes(k * deta) for k, w in stencil) / deta


__all__ = [
    "BlowUpError",
    "GroupAction",
    "JetOrderError",
    "JetSpec",
    "ProjectabilityError",
    "ProlongedAction",
    "VectorField",
    "apply_prolonged_field",
    "flow",
    "jet_values",
    "numeric_prolonged_generator",
    "prolong_function",
    "prolong_group_action",
    "prolong_vector_field",
    "total_derivative",
    "total_derivative_multi",
    "vector_field_from_action",
]
