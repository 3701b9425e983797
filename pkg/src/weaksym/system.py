"""PDE systems Delta_i(x, u^(n)) = 0 with solved-coordinate metadata."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .expr import ZERO, Expr, ExprError, differentiate, normalize, substitute, wrap
from .jet import JetSpec


class ClassificationError(ExprError):
    pass


LINEAR = "linear"
SEMILINEAR = "semilinear"
QUASILINEAR = "quasilinear"
GENERAL = "general"


@dataclass
class PDESystem:
    """System Delta = 0 on the jet space ``spec``.

    ``solved`` lists one jet coordinate per equation (z_{k_1} .. z_{k_s}); by
    default the t-derivative of each dependent variable when p = 2 and the
    last independent variable is ``t``. Semilinear systems follow the sign
    convention Delta = L u - F.
    """

    spec: JetSpec
    equations: tuple
    solved: tuple = ()
    name: str = "system"
    classification: str = field(default="", init=False)

    def __post_init__(self):
        self.equations = tuple(normalize(wrap(e)) for e in self.equations)
        sp = self.spec
        allowed = set(sp.coords)
        for e in self.equations:
            extra = {s for s in e.free_symbols if s not in allowed}
            if extra:
                raise ExprError(f"equation {e} has symbols outside the jet space: {sorted(extra)}")
        if not self.solved:
            if sp.indep[-1] == "t" and len(self.equations) == sp.q:
                self.solved = tuple(sp.jet_name(a, (sp.p - 1,)) for a in range(sp.q))
            else:
                raise ExprError("solved coordinates must be given")
        self.solved = tuple(sp.canonical(s) for s in self.solved)
        if len(self.solved) != len(self.equations):
            raise ExprError("need exactly one solved coordinate per equation")
        if len(set(self.solved)) != len(self.solved):
            raise ExprError("solved coordinates must be distinct")
        for s in self.solved:
            if sp.index(s) < sp.p:
                raise ExprError("solved indices must exceed p")
        self.classification = classify(self)

    @property
    def s(self) -> int:
        return len(self.equations)

    @property
    def solved_indices(self) -> tuple:
        return tuple(self.spec.index(c) for c in self.solved)

    def other_coords(self) -> tuple:
        """z' : all coordinates except the solved ones, in order."""
        solved = set(self.solved)
        return tuple(c for c in self.spec.coords if c not in solved)

    def jet_coefficients(self, i: int) -> dict[str, Expr]:
        """d Delta_i / d z_k for every derivative jet z_k (order >= 1)."""
        out = {}
        for c in self.spec.derivative_jets():
            d = differentiate(self.equations[i], c)
            if d != ZERO:
                out[c] = d
        return out

    @property
    def is_quasilinear(self) -> bool:
        """u_t + A(u) u_x = 0 shape; constant-coefficient linear systems qualify too."""
        return self.classification == QUASILINEAR or _is_quasilinear(self)

    def quasilinear_matrix(self) -> list[list[Expr]]:
        """A(u) of u_t + A(u) u_x."""
        if not self.is_quasilinear:
            raise ClassificationError(f"{self.name} is {self.classification}, not quasilinear")
        sp = self.spec
        return [[differentiate(self.equations[i], sp.jet_name(b, (0,))) for b in range(sp.q)] for i in range(sp.q)]


def _x_only(e: Expr, spec: JetSpec) -> bool:
    return not any(spec.is_jet(s) for s in e.free_symbols)


def _u_only(e: Expr, spec: JetSpec) -> bool:
    return not any(s in spec.indep or (spec.is_jet(s) and spec.jet_order(s) > 0) for s in e.free_symbols)


def classify(sys: PDESystem) -> str:
    sp = sys.spec
    derivs = sp.derivative_jets()
    u0 = list(sp.dep)
    semilinear = True
    linear = True
    for i, e in enumerate(sys.equations):
        coeffs = sys.jet_coefficients(i)
        if not all(_x_only(c, sp) for c in coeffs.values()):
            semilinear = linear = False
            break
        rest = substitute(e, {c: ZERO for c in derivs})
        for u in u0:
            d = differentiate(rest, u)
            if not _x_only(d, sp):
                linear = False
    if linear:
        return LINEAR
    if semilinear:
        return SEMILINEAR
    if _is_quasilinear(sys):
        return QUASILINEAR
    return GENERAL


def _is_quasilinear(sys: PDESystem) -> bool:
    sp = sys.spec
    if sp.p != 2 or sp.order != 1 or sys.s != sp.q or sp.indep[1] != "t":
        return False
    for i, e in enumerate(sys.equations):
        if sys.solved[i] != sp.jet_name(i, (1,)):
            return False
        rest = e
        for b in range(sp.q):
            ut = sp.jet_name(b, (1,))
            if normalize(differentiate(e, ut)) != (1 if b == i else 0):
                return False
            ux = sp.jet_name(b, (0,))
            a = differentiate(e, ux)
            if not _u_only(a, sp):
                return False
            rest = substitute(rest, {ut: ZERO, ux: ZERO})
        if normalize(rest) != ZERO:
            return False
    return True


def make_system(spec: JetSpec, equations: Sequence, solved: Sequence = (), name: str = "system", table=None) -> PDESystem:
    """Build a system from Exprs or strings (parsed against ``table``)."""
    eqs = []
    for e in equations:
        if isinstance(e, str):
            if table is None:
                table = spec.table()
            e = table.parse(e)
        eqs.append(e)
    return PDESystem(spec, tuple(eqs), tuple(solved), name=name)


def linear_coefficients(sys: PDESystem) -> tuple[list[dict[str, Expr]], list[Expr]]:
    """a^i_k(x) (over all u-coordinates) and a_0^i for a linear/semilinear system."""
    if sys.classification not in (LINEAR, SEMILINEAR):
        raise ClassificationError(f"{sys.name} is {sys.classification}")
    sp = sys.spec
    zero = {c: ZERO for c in sp.coords[sp.p :]}
    coeffs, inhom = [], []
    for i, e in enumerate(sys.equations):
        if sys.classification == LINEAR:
            row = {c: differentiate(e, c) for c in sp.coords[sp.p :]}
            a0 = substitute(e, zero)
        else:
            row = sys.jet_coefficients(i)
            a0 = substitute(e, {c: ZERO for c in sp.derivative_jets()})
        coeffs.append({k: v for k, v in row.items() if v != ZERO})
        inhom.append(a0)
    return coeffs, inhom


__all__ = [
    "ClassificationError",
    "GENERAL",
    "LINEAR",
    "PDESystem",
    "QUASILINEAR",
    "SEMILINEAR",
    "classify",
    "linear_coefficients",
    "make_system",
]
