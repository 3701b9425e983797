"""Line-oriented model files.

A model file has bracketed sections; each holds ``key: value`` lines and
``#`` starts a comment::

    [model]
    indep: x, t
    dep: u
    order: 1
    family: exp
    const: ul = 1, ur = 0

    [system]
    eq: u_t + f(u)*u_x

    [group G1]
    x: x/(1 - eta*t)
    t: t/(1 - eta*t)
    u: finv(eta*x + f(u) - eta*f(u)*t)
    eta: -0.1, 0.1
    box: x = -1..1, t = -1..1, u = -1..1
    factor: (1 - eta*t)^3*fp(u)/fp(finv(eta*x + f(u) - eta*f(u)*t))

    [generator w1]
    x: x*t
    t: t^2
    u: (x - f(u)*t)/fp(u)

    [ansatz]
    unknown: xi(x, t), theta(x, t), psi(x, t, u)
    x: xi(x, t)
    t: theta(x, t)
    u: psi(x, t, u)

    [net shock]
    u: ul + (ur - ul)*H((x - c*t)/eps)
    layer: x - c*t
    centers: 0.75 1.5; 0.9 1.75
    scales: 1, 0.5, 0.25
    k: 1
    expect: zero

    [scenario]
    anything: free-form parameters for scenario code

``H`` and ``delta`` inside nets are the mollified Heaviside and delta.
Factor matrices with several rows separate rows by ``;`` and entries by ``,``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .colombeau import EPS, GNet, Mollifier, ProbeFamily, probe
from .expr import (
    ZERO,
    Call,
    Const,
    Expr,
    ExprError,
    Lambda,
    call,
    differentiate,
    is_zero,
    normalize,
    placeholder,
    substitute,
)
from .jet import GroupAction, JetSpec, VectorField
from .parser import ParseError
from .system import PDESystem, make_system
from .table import Role, SymbolTable, register_family

SECTIONS = ("model", "system", "group", "generator", "ansatz", "net", "scenario")


class ModelError(ValueError):
    """Malformed model file; carries the 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


@dataclass
class Entry:
    key: str
    value: str
    line: int
    column: int


@dataclass
class Section:
    kind: str
    name: str
    entries: list
    line: int

    def get(self, key: str, default=None):
        for e in self.entries:
            if e.key == key:
                return e
        return default

    def all(self, key: str) -> list:
        return [e for e in self.entries if e.key == key]


@dataclass
class NetDecl:
    name: str
    net: GNet
    family: ProbeFamily | None
    expect: str
    system: PDESystem | None = None
    growth: list = field(default_factory=list)


@dataclass
class GroupDecl:
    name: str
    action: GroupAction
    factor: list | None = None


@dataclass
class GeneratorDecl:
    name: str
    field: VectorField
    factor: list | None = None
    group: str | None = None


@dataclass
class Model:
    """Parsed model: a jet space, a system, and the declared actions/fields/nets."""

    text: str
    spec: JetSpec
    table: SymbolTable
    system: PDESystem | None
    constants: dict
    family: str | None = None
    groups: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    ansatz: VectorField | None = None
    unknowns: tuple = ()
    nets: list = field(default_factory=list)
    scenario: dict = field(default_factory=dict)
    mollifier: Mollifier | None = None

    def group(self, name: str) -> GroupDecl:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def generator(self, name: str) -> GeneratorDecl:
        for g in self.generators:
            if g.name == name:
                return g
        raise KeyError(name)

    def specialization(self, gen: GeneratorDecl) -> dict:
        """Lambdas that turn the ansatz into ``gen`` (unknown name -> Lambda)."""
        if self.ansatz is None:
            raise ModelError("model has no [ansatz] section")
        out = {}
        comps_a = self.ansatz.xi + self.ansatz.phi
        comps_g = gen.field.xi + gen.field.phi
        for a, g in zip(comps_a, comps_g):
            if not isinstance(a, Call):
                continue
            params = tuple(placeholder(i) for i in range(len(a.args)))
            body = substitute(g, {arg.name: p for arg, p in zip(a.args, params)})
            out[a.func.name] = Lambda(params, body)
        return out


# ---------------------------------------------------------------------------
# lexical layer


_HEADER = re.compile(r"^\[\s*([A-Za-z]+)(?:\s+([A-Za-z_][A-Za-z0-9_]*))?\s*\]$")


def split_sections(text: str) -> list[Section]:
    sections: list[Section] = []
    current: Section | None = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            m = _HEADER.match(stripped)
            if not m:
                raise ModelError(f"malformed section header {stripped!r}", n, 1)
            kind, name = m.group(1), m.group(2) or ""
            if kind not in SECTIONS:
                raise ModelError(f"unknown section [{kind}]", n, 2)
            current = Section(kind, name, [], n)
            sections.append(current)
            continue
        if current is None:
            raise ModelError("content before the first section", n, 1)
        if ":" not in line:
            raise ModelError("expected 'key: value'", n, 1)
        key, value = line.split(":", 1)
        col = len(line) - len(line.lstrip()) + 1
        current.entries.append(Entry(key.strip(), value.strip(), n, col + len(key) + 1))
    return sections


def _parse_expr(table: SymbolTable, entry: Entry, text: str | None = None, offset: int = 0) -> Expr:
    text = entry.value if text is None else text
    try:
        return table.parse(text)
    except (ParseError, ExprError) as exc:
        pos = getattr(exc, "pos", -1)
        col = entry.column + 1 + offset + (pos if pos and pos > 0 else 0)
        raise ModelError(str(getattr(exc, "message", exc)), entry.line, col) from None


def _number(entry: Entry, text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ModelError(f"expected a number, got {text.strip()!r}", entry.line, entry.column) from None


def _names(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _box(entry: Entry) -> dict:
    out = {}
    for part in entry.value.split(","):
        if not part.strip():
            continue
        m = re.match(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+?)\s*\.\.\s*(\S+)\s*$", part)
        if not m:
            raise ModelError(f"expected 'name = lo..hi', got {part.strip()!r}", entry.line, entry.column)
        out[m.group(1)] = (_number(entry, m.group(2)), _number(entry, m.group(3)))
    return out


def _matrix(table, entry: Entry, consts: dict) -> list:
    rows = []
    for row in entry.value.split(";"):
        rows.append([_bind(_parse_expr(table, entry, c), consts) for c in row.split(",")])
    return rows


def _bind(e: Expr, consts: dict) -> Expr:
    if not consts:
        return e
    hit = {k: v for k, v in consts.items() if k in e.free_symbols}
    return normalize(substitute(e, hit)) if hit else e


# ---------------------------------------------------------------------------
# semantic layer


def parse_model(text: str, mollifier: Mollifier | None = None) -> Model:
    """Parse model text; undeclared symbols are reported with line and column."""
    sections = split_sections(text)
    heads = [s for s in sections if s.kind == "model"]
    if len(heads) != 1:
        raise ModelError("exactly one [model] section is required", heads[1].line if len(heads) > 1 else 0)
    head = heads[0]
    indep = _names(_required(head, "indep").value)
    dep = _names(_required(head, "dep").value)
    order_e = head.get("order")
    order = int(_number(order_e, order_e.value)) if order_e else 1
    try:
        spec = JetSpec(indep, dep, order)
        table = spec.table()
    except ExprError as exc:
        raise ModelError(str(exc), head.line) from None
    fam_e = head.get("family")
    family = None
    if fam_e:
        family = fam_e.value.strip()
        try:
            register_family(table, family)
        except ExprError as exc:
            raise ModelError(str(exc), fam_e.line, fam_e.column) from None
    consts: dict = {}
    for ce in head.all("const"):
        for part in ce.value.split(","):
            if "=" not in part:
                raise ModelError("expected 'name = value'", ce.line, ce.column)
            k, v = part.split("=", 1)
            k = k.strip()
            try:
                table.declare(k, Role.CONSTANT)
            except ExprError as exc:
                raise ModelError(str(exc), ce.line, ce.column) from None
            try:
                consts[k] = Const(Fraction(v.strip()))
            except (ValueError, ZeroDivisionError):
                raise ModelError(f"expected a number, got {v.strip()!r}", ce.line, ce.column) from None
    model = Model(text, spec, table, None, consts, family)
    if any(s.kind == "net" for s in sections):
        model.mollifier = mollifier or Mollifier()
    for sec in sections:
        if sec.kind == "system":
            _system(model, sec)
        elif sec.kind == "group":
            _group(model, sec)
        elif sec.kind == "generator":
            _generator(model, sec)
        elif sec.kind == "ansatz":
            _ansatz(model, sec)
        elif sec.kind == "net":
            _net(model, sec)
        elif sec.kind == "scenario":
            model.scenario.update({e.key: e.value for e in sec.entries})
    return model


def _required(sec: Section, key: str) -> Entry:
    e = sec.get(key)
    if e is None:
        raise ModelError(f"[{sec.kind}] needs '{key}'", sec.line, 1)
    return e


def _system(model: Model, sec: Section):
    if model.system is not None:
        raise ModelError("only one [system] section is allowed", sec.line)
    eqs = [_bind(_parse_expr(model.table, e), model.constants) for e in sec.all("eq")]
    if not eqs:
        raise ModelError("[system] needs at least one 'eq'", sec.line)
    solved = _names(sec.get("solved").value) if sec.get("solved") else ()
    try:
        model.system = make_system(model.spec, eqs, solved, name=sec.name or "system")
    except ExprError as exc:
        raise ModelError(str(exc), sec.line) from None


def _components(model: Model, sec: Section) -> tuple[list, list]:
    sp = model.spec
    xs, us = [], []
    for name, out in [(x, xs) for x in sp.indep] + [(u, us) for u in sp.dep]:
        e = _required(sec, name)
        out.append(_bind(_parse_expr(model.table, e), model.constants))
    return xs, us


def _linear_parts(spec: JetSpec, Phi: list, ranges: dict):
    """(phi_mat, psi) when Phi is affine in u, else (None, None)."""
    mat = []
    for P in Phi:
        row = [normalize(differentiate(P, u)) for u in spec.dep]
        for c in row:
            for u in spec.dep:
                if u in c.free_symbols and not is_zero(differentiate(c, u), ranges=ranges):
                    return None, None
        mat.append(row)
    zero = {u: ZERO for u in spec.dep}
    psi = [normalize(substitute(P, zero)) for P in Phi]
    return tuple(tuple(r) for r in mat), tuple(psi)


def _group(model: Model, sec: Section):
    sp = model.spec
    Xi, Phi = _components(model, sec)
    eta_e = sec.get("eta")
    eta_range = (-0.1, 0.1)
    if eta_e:
        lo, hi = eta_e.value.split(",")
        eta_range = (_number(eta_e, lo), _number(eta_e, hi))
    box = _box(sec.get("box")) if sec.get("box") else {}
    ranges = dict(box)
    ranges["eta"] = eta_range
    try:
        mat, psi = _linear_parts(sp, Phi, ranges)
        g = GroupAction(sp, tuple(Xi), tuple(Phi), eta_range, mat, psi, box=box, name=sec.name or "g")
    except ExprError as exc:
        raise ModelError(str(exc), sec.line) from None
    fe = sec.get("factor")
    model.groups.append(GroupDecl(g.name, g, _matrix(model.table, fe, model.constants) if fe else None))


def _generator(model: Model, sec: Section):
    sp = model.spec
    xi, phi = _components(model, sec)
    alpha = beta = None
    mat, psi = _linear_parts(sp, phi, {})
    if mat is not None and all(not any(s in sp.dep for s in c.free_symbols) for row in mat for c in row):
        alpha, beta = mat, psi
    try:
        v = VectorField(sp, tuple(xi), tuple(phi), alpha, beta, name=sec.name or "v")
    except ExprError as exc:
        raise ModelError(str(exc), sec.line) from None
    fe = sec.get("factor")
    ge = sec.get("group")
    model.generators.append(
        GeneratorDecl(v.name, v, _matrix(model.table, fe, model.constants) if fe else None, ge.value.strip() if ge else None)
    )


_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*$")


def _ansatz(model: Model, sec: Section):
    unknowns = []
    ue = _required(sec, "unknown")
    for m in re.finditer(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(([^)]*)\)", ue.value):
        args = _names(m.group(2))
        bad = [a for a in args if a not in model.spec.indep + model.spec.dep]
        if bad:
            raise ModelError(f"unknown function arguments must be coordinates, got {bad}", ue.line, ue.column)
        try:
            model.table.unknown(m.group(1), args)
        except ExprError as exc:
            raise ModelError(str(exc), ue.line, ue.column) from None
        unknowns.append(m.group(1))
    xi, phi = _components(model, sec)
    model.unknowns = tuple(unknowns)
    try:
        model.ansatz = VectorField(model.spec, tuple(xi), tuple(phi), name="ansatz")
    except ExprError as exc:
        raise ModelError(str(exc), sec.line) from None


def _net_table(model: Model) -> SymbolTable:
    t = SymbolTable()
    t.declare_many(model.spec.indep, Role.INDEPENDENT)
    for k in model.constants:
        t.declare(k, Role.CONSTANT)
    for name, fn in model.table.functions.items():
        if fn.arity == 1 and name in ("f", "fp", "fpp", "finv", "F"):
            t.register(fn)
    m = model.mollifier
    t.functions["H"] = m.Theta
    t.functions["delta"] = m.theta
    return t


def _net(model: Model, sec: Section):
    sp = model.spec
    t = _net_table(model)
    m = model.mollifier
    comps = []
    for u in sp.dep:
        e = _required(sec, u)
        expr = _bind(_parse_expr(t, e), model.constants)
        # H and delta were parsed as the mollifier functions; delta(y) needs 1/eps
        comps.append(_scale_delta(expr, m))
    layers = tuple(_bind(_parse_expr(t, e), model.constants) for e in sec.all("layer"))
    box = _box(sec.get("box")) if sec.get("box") else {}
    bounded = sec.get("bounded")
    try:
        net = GNet(tuple(comps), sp.indep, box, bool(bounded and bounded.value.strip() == "yes"), layers, m.support, sec.name or "net")
    except ExprError as exc:
        raise ModelError(str(exc), sec.line) from None
    family = None
    ce = sec.get("centers")
    if ce:
        centers = []
        for part in ce.value.split(";"):
            vals = tuple(_number(ce, v) for v in part.split())
            if len(vals) != sp.p:
                raise ModelError(f"probe centers need {sp.p} coordinates", ce.line, ce.column)
            centers.append(vals)
        se = sec.get("scales")
        scales = tuple(_number(se, v) for v in se.value.split(",")) if se else (1.0, 0.5, 0.25)
        ke = sec.get("k")
        family = ProbeFamily(sp.indep, tuple(centers), scales, int(_number(ke, ke.value)) if ke else 1)
    ee = sec.get("expect")
    expect = ee.value.strip() if ee else "zero"
    if expect not in ("zero", "nonzero", "diverges"):
        raise ModelError("expect must be zero, nonzero or diverges", ee.line, ee.column)
    system = None
    eq_entries = sec.all("eq")
    if eq_entries:
        eqs = [_bind(_parse_expr(model.table, e), model.constants) for e in eq_entries]
        solved = [_top_jet(sp, e, entry) for e, entry in zip(eqs, eq_entries)]
        try:
            system = make_system(sp, eqs, solved, name=sec.name or "net")
        except ExprError as exc:
            raise ModelError(str(exc), eq_entries[0].line) from None
    growth = []
    for ge in sec.all("growth"):
        m_ = re.match(r"^([\d\s]+)->\s*(\S+)\s*\+-\s*(\S+)\s*$", ge.value)
        if not m_:
            raise ModelError("expected 'growth: <derivative orders> -> p +- tol'", ge.line, ge.column)
        alpha = tuple(int(v) for v in m_.group(1).split())
        if len(alpha) != sp.p:
            raise ModelError(f"growth needs {sp.p} derivative orders", ge.line, ge.column)
        growth.append((alpha, _number(ge, m_.group(2)), _number(ge, m_.group(3))))
    model.nets.append(NetDecl(net.name, net, family, expect, system, growth))


def _top_jet(sp: JetSpec, e: Expr, entry: Entry) -> str:
    """Highest jet coordinate present in a single relation (its solved coordinate)."""
    present = [c for c in sp.coords[sp.p :] if c in e.free_symbols]
    if not present:
        raise ModelError("relation does not involve the dependent variables", entry.line, entry.column)
    return present[-1]


def _scale_delta(e: Expr, m: Mollifier) -> Expr:
    """delta(y) in a net means theta(y)/eps (mass one in the original variable)."""
    if not isinstance(e, Expr) or m.theta.name not in _function_names(e):
        return e
    from .expr import div

    def go(x):
        if isinstance(x, Call) and x.func is m.theta:
            return div(call(m.theta, [go(a) for a in x.args]), EPS)
        if isinstance(x, Call):
            return call(x.func, [go(a) for a in x.args])
        kids = x.children
        if not kids:
            return x
        return _rebuild(x, [go(k) for k in kids])

    return normalize(go(e))


def _function_names(e: Expr) -> set:
    out = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Call):
            out.add(x.func.name)
        stack.extend(x.children)
    return out


def _rebuild(x: Expr, kids: list) -> Expr:
    from .expr import Add, Div, Mul, Pow, add, div, mul, power

    if isinstance(x, Add):
        return add(*kids)
    if isinstance(x, Mul):
        return mul(*kids)
    if isinstance(x, Pow):
        return power(kids[0], x.exp)
    if isinstance(x, Div):
        return div(kids[0], kids[1])
    return x


def render_model_value(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def fmt_box(box: dict) -> str:
    return ", ".join(f"{k} = {render_model_value(lo)}..{render_model_value(hi)}" for k, (lo, hi) in box.items())


def grid_from(scn: dict, default=(3, 12)) -> np.ndarray:
    """eps grid 2^-j0 .. 2^-j1 from a scenario 'eps: j0..j1' entry."""
    from .colombeau import default_grid

    spec = scn.get("eps")
    if not spec:
        return default_grid(*default)
    a, b = spec.split("..")
    return default_grid(int(a), int(b))


__all__ = [
    "Entry",
    "GeneratorDecl",
    "GroupDecl",
    "Model",
    "ModelError",
    "NetDecl",
    "Section",
    "fmt_box",
    "grid_from",
    "parse_model",
    "probe",
    "split_sections",
]
