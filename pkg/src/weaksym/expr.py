"""Immutable expression trees.

Nodes are built raw (``Add``, ``Mul``, ... as produced by the parser) or through
the canonical constructors ``add``, ``mul``, ``power``, ``call`` which keep the
tree in normal form: flattened sums and products, sorted operands, collected
rational coefficients and collected powers of identical bases. Every calculus
operation in this module returns canonical trees.

Semantic zero detection beyond the canonical form is probabilistic, see
``is_zero``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

Number = Union[Fraction, float]


class ExprError(Exception):
    pass


class DomainError(ArithmeticError):
    """Numeric evaluation left the domain (log of non-positive, 1/0, overflow)."""


class UnboundSymbolError(ExprError):
    pass


class DerivativeError(ExprError):
    pass


def _number(v) -> Number:
    if isinstance(v, bool):
        raise TypeError("booleans are not expression constants")
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, (float, np.floating)):
        return float(v)
    raise TypeError(f"not a number: {v!r}")


def _rational(v) -> Fraction:
    if isinstance(v, Const):
        v = v.value
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ExprError("non-finite exponent")
        f = Fraction(repr(v))
        if f.denominator > 1000:
            raise ExprError(f"exponent {v!r} is not a simple rational")
        return f
    return Fraction(v)


class Expr:
    __slots__ = ("_key", "_hash", "_free", "_cache")

    def __init__(self):
        self._key = None
        self._hash = None
        self._free = None
        self._cache = None

    # structural identity -------------------------------------------------
    @property
    def key(self) -> str:
        if self._key is None:
            self._key = self._make_key()
        return self._key

    def _make_key(self) -> str:
        raise NotImplementedError

    def __eq__(self, other):
        if isinstance(other, (int, float, Fraction)) and not isinstance(other, bool):
            other = Const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self is other or self.key == other.key

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.key)
        return self._hash

    @property
    def children(self) -> tuple:
        return ()

    @property
    def free_symbols(self) -> frozenset:
        if self._free is None:
            out = set()
            for c in self.children:
                out |= c.free_symbols
            self._free = frozenset(out)
        return self._free

    def has(self, *names) -> bool:
        names = {n.name if isinstance(n, Sym) else n for n in names}
        return not names.isdisjoint(self.free_symbols)

    # arithmetic builds canonical trees -----------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(-1, other))

    def __rsub__(self, other):
        return add(other, mul(-1, self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(-1, self)

    def __pow__(self, exp):
        return power(self, exp)

    def __str__(self):
        return render(self)

    def __repr__(self):
        return f"<{type(self).__name__} {render(self)}>"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        super().__init__()
        self.value = _number(value)

    def _make_key(self):
        v = self.value
        if isinstance(v, float):
            return f"#{v!r}f"
        return f"#{v}"

    @property
    def free_symbols(self):
        return frozenset()

    @property
    def is_float(self) -> bool:
        return isinstance(self.value, float)


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _make_key(self):
        return self.name

    @property
    def free_symbols(self):
        return frozenset((self.name,))


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        super().__init__()
        self.terms = tuple(terms)

    @property
    def children(self):
        return self.terms

    def _make_key(self):
        return "(+ " + " ".join(t.key for t in self.terms) + ")"


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors):
        super().__init__()
        self.factors = tuple(factors)

    @property
    def children(self):
        return self.factors

    def _make_key(self):
        return "(* " + " ".join(f.key for f in self.factors) + ")"


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp):
        super().__init__()
        self.base = base
        self.exp = _rational(exp)

    @property
    def children(self):
        return (self.base,)

    def _make_key(self):
        return f"(^ {self.base.key} {self.exp})"


class Div(Expr):
    """Raw quotient node; canonical form rewrites it as a product."""

    __slots__ = ("num", "den")

    def __init__(self, num: Expr, den: Expr):
        super().__init__()
        self.num = num
        self.den = den

    @property
    def children(self):
        return (self.num, self.den)

    def _make_key(self):
        return f"(/ {self.num.key} {self.den.key})"


class Call(Expr):
    __slots__ = ("func", "args")

    def __init__(self, func: "Function", args):
        super().__init__()
        self.func = func
        self.args = tuple(args)

    @property
    def children(self):
        return self.args

    def _make_key(self):
        return f"{self.func.name}(" + ",".join(a.key for a in self.args) + ")"


ZERO = Const(0)
ONE = Const(1)
HALF = Const(Fraction(1, 2))


def placeholder(i: int) -> Sym:
    return Sym(f"_{i}")


@dataclass(frozen=True)
class Lambda:
    """Function literal used to specialize opaque functions: params -> body."""

    params: tuple
    body: Expr

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(p.name if isinstance(p, Sym) else p for p in self.params))


class Function:
    """A named function symbol with numeric evaluator and derivative rules.

    ``derivatives`` is a sequence (one per slot) of templates over the
    placeholders ``_0, _1, ...``; entries may be callables producing the
    template lazily, which lets derivative chains (f, f', f'', ...) be
    unbounded.
    """

    def __init__(
        self,
        name: str,
        arity: int,
        evaluator: Callable | None = None,
        derivatives: Sequence | Callable | None = None,
        inverse: str | None = None,
        elementary: bool = False,
        base: str | None = None,
        dindex: tuple = (),
    ):
        self.name = name
        self.arity = arity
        self.evaluator = evaluator
        self._derivatives = derivatives
        self._dcache: dict[int, Expr] = {}
        self.inverse = inverse
        self.elementary = elementary
        self.base = base or name
        self.dindex = tuple(dindex) if dindex else (0,) * arity

    def derivative(self, slot: int) -> Expr:
        if slot in self._dcache:
            return self._dcache[slot]
        rule = self._derivatives
        if callable(rule):
            rule = rule(slot)
        elif rule is not None:
            rule = rule[slot] if slot < len(rule) else None
            if callable(rule):
                rule = rule()
        if rule is None:
            raise DerivativeError(f"no derivative rule for {self.name} in slot {slot}")
        rule = normalize(rule)
        self._dcache[slot] = rule
        return rule

    def __repr__(self):
        return f"Function({self.name}/{self.arity})"


def _odd_root(b, p, q):
    return np.sign(b) ** p * np.abs(b) ** (p / q)


EXP = Function("exp", 1, np.exp, inverse="log", elementary=True)
LOG = Function("log", 1, np.log, inverse="exp", elementary=True)
SIN = Function("sin", 1, np.sin, elementary=True)
COS = Function("cos", 1, np.cos, elementary=True)
SQRT = Function("sqrt", 1, np.sqrt, elementary=True)
ABS = Function("abs", 1, np.abs, elementary=True)
SIGN = Function("sign", 1, np.sign, elementary=True)

_X = placeholder(0)
EXP._derivatives = [lambda: call(EXP, [_X])]
LOG._derivatives = [lambda: power(_X, -1)]
SIN._derivatives = [lambda: call(COS, [_X])]
COS._derivatives = [lambda: mul(-1, call(SIN, [_X]))]
SQRT._derivatives = [lambda: mul(HALF, power(_X, Fraction(-1, 2)))]
ABS._derivatives = [lambda: call(SIGN, [_X])]
SIGN._derivatives = [lambda: ZERO]

ELEMENTARY = {f.name: f for f in (EXP, LOG, SIN, COS, SQRT, ABS, SIGN)}


# ---------------------------------------------------------------------------
# canonical constructors


def wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(x)


def _sort(items):
    return sorted(items, key=lambda e: e.key)


def add(*args) -> Expr:
    const: Number = Fraction(0)
    acc: dict[str, list] = {}
    stack = list(args)
    stack.reverse()
    while stack:
        a = wrap(stack.pop())
        if isinstance(a, Add):
            stack.extend(reversed(a.terms))
            continue
        if isinstance(a, Const):
            const = const + a.value
            continue
        if isinstance(a, Mul) and isinstance(a.factors[0], Const):
            c = a.factors[0].value
            rest_f = a.factors[1:]
            rest = rest_f[0] if len(rest_f) == 1 else Mul(rest_f)
        else:
            c, rest = Fraction(1), a
        slot = acc.get(rest.key)
        if slot is None:
            acc[rest.key] = [rest, c]
        else:
            slot[1] = slot[1] + c
    out = []
    if const != 0:
        out.append(Const(const))
    for rest, c in acc.values():
        if c == 0:
            continue
        if c == 1 and not isinstance(c, float):
            out.append(rest)
        else:
            fs = rest.factors if isinstance(rest, Mul) else (rest,)
            out.append(Mul((Const(c),) + tuple(fs)))
    if not out:
        return Const(const) if isinstance(const, float) else ZERO
    if len(out) == 1:
        return out[0]
    return Add(_sort(out))


def mul(*args) -> Expr:
    coef: Number = Fraction(1)
    bases: dict[str, list] = {}
    stack = list(args)
    stack.reverse()
    while stack:
        a = wrap(stack.pop())
        if isinstance(a, Mul):
            stack.extend(reversed(a.factors))
            continue
        if isinstance(a, Const):
            coef = coef * a.value
            continue
        if isinstance(a, Pow):
            b, e = a.base, a.exp
        else:
            b, e = a, Fraction(1)
        slot = bases.get(b.key)
        if slot is None:
            bases[b.key] = [b, e]
        else:
            slot[1] = slot[1] + e
    if coef == 0:
        return ZERO
    factors = []
    for b, e in bases.values():
        if e == 0:
            continue
        p = power(b, e)
        if isinstance(p, Const):
            coef = coef * p.value
        elif isinstance(p, Mul):
            for f in p.factors:
                if isinstance(f, Const):
                    coef = coef * f.value
                else:
                    factors.append(f)
        else:
            factors.append(p)
    if coef == 0:
        return ZERO
    if not factors:
        return Const(coef)
    factors = _sort(factors)
    unit = coef == 1 and not isinstance(coef, float)
    if len(factors) == 1:
        if unit:
            return factors[0]
        if isinstance(factors[0], Add):
            return add(*(mul(Const(coef), t) for t in factors[0].terms))
    if unit:
        return Mul(factors)
    return Mul((Const(coef),) + tuple(factors))


def _exact_root(v: Fraction, q: int):
    if v < 0:
        if q % 2 == 0:
            return None
        r = _exact_root(-v, q)
        return None if r is None else -r
    out = []
    for part in (v.numerator, v.denominator):
        r = round(part ** (1.0 / q))
        hit = None
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand**q == part:
                hit = cand
        if hit is None:
            return None
        out.append(hit)
    return Fraction(out[0], out[1])


def power(base, exp) -> Expr:
    base = wrap(base)
    exp = _rational(exp)
    if exp == 0:
        return ONE
    if exp == 1:
        return base
    if isinstance(base, Const):
        v = base.value
        if isinstance(v, Fraction):
            if v == 1:
                return ONE
            if exp.denominator == 1:
                if v == 0 and exp < 0:
                    raise DomainError("division by zero in constant power")
                return Const(v**exp.numerator)
            r = _exact_root(v, exp.denominator)
            if r is not None:
                return power(Const(r), exp.numerator)
            return Pow(base, exp)
        if v < 0 and exp.denominator % 2 == 0:
            raise DomainError(f"even root of negative constant {v}")
        if v == 0 and exp < 0:
            raise DomainError("division by zero in constant power")
        return Const(float(_odd_root(v, exp.numerator, exp.denominator)) if v < 0 else v ** float(exp))
    if isinstance(base, Pow) and exp.denominator == 1:
        return power(base.base, base.exp * exp)
    if isinstance(base, Mul) and exp.denominator == 1:
        return mul(*(power(f, exp) for f in base.factors))
    return Pow(base, exp)


def div(a, b) -> Expr:
    return mul(a, power(b, -1))


def sub(a, b) -> Expr:
    return add(a, mul(-1, b))


def call(func: Function, args) -> Expr:
    args = tuple(wrap(a) for a in args)
    if len(args) != func.arity:
        raise ExprError(f"{func.name} expects {func.arity} argument(s), got {len(args)}")
    if func is SQRT:
        return power(args[0], Fraction(1, 2))
    a0 = args[0]
    if func.inverse is not None and func.arity == 1 and isinstance(a0, Call) and a0.func.name == func.inverse:
        return a0.args[0]
    if func.elementary and isinstance(a0, Const):
        v = a0.value
        if v == 0 and func in (SIN, SIGN):
            return ZERO
        if v == 0 and func in (EXP, COS):
            return ONE
        if v == 1 and func is LOG:
            return ZERO
        if func is ABS:
            return Const(abs(v))
        if func is SIGN:
            return Const((v > 0) - (v < 0))
    if func.evaluator is not None and all(isinstance(a, Const) for a in args) and any(a.is_float for a in args):
        with np.errstate(all="raise"):
            try:
                val = float(func.evaluator(*(np.float64(float(a.value)) for a in args)))
            except FloatingPointError as exc:
                raise DomainError(f"{func.name} at constant arguments: {exc}") from None
        return Const(val)
    return Call(func, args)


def normalize(e: Expr) -> Expr:
    """Canonical form of ``e`` (idempotent; preserves numeric value)."""
    e = wrap(e)
    if isinstance(e, (Const, Sym)):
        return e
    c = e._cache
    if c is not None and "norm" in c:
        return c["norm"]
    if isinstance(e, Add):
        out = add(*(normalize(t) for t in e.terms))
    elif isinstance(e, Mul):
        out = mul(*(normalize(f) for f in e.factors))
    elif isinstance(e, Pow):
        out = power(normalize(e.base), e.exp)
    elif isinstance(e, Div):
        out = div(normalize(e.num), normalize(e.den))
    elif isinstance(e, Call):
        out = call(e.func, [normalize(a) for a in e.args])
    else:  # pragma: no cover
        raise ExprError(f"unknown node {e!r}")
    _memo(e, "norm", out)
    _memo(out, "norm", out)
    return out


def _memo(e: Expr, key, value):
    if e._cache is None:
        e._cache = {}
    e._cache[key] = value


# ---------------------------------------------------------------------------
# calculus


def _name(s) -> str:
    return s.name if isinstance(s, Sym) else str(s)


def differentiate(e: Expr, s) -> Expr:
    """Exact partial derivative of ``e`` with respect to symbol ``s``."""
    return _diff(normalize(e), _name(s))


def _diff(e: Expr, s: str) -> Expr:
    if s not in e.free_symbols:
        return ZERO
    key = ("d", s)
    if e._cache is not None and key in e._cache:
        return e._cache[key]
    if isinstance(e, Sym):
        out = ONE
    elif isinstance(e, Add):
        out = add(*(_diff(t, s) for t in e.terms))
    elif isinstance(e, Mul):
        fs = e.factors
        parts = []
        for i, f in enumerate(fs):
            df = _diff(f, s)
            if df == ZERO:
                continue
            parts.append(mul(*(fs[:i] + (df,) + fs[i + 1 :])))
        out = add(*parts)
    elif isinstance(e, Pow):
        out = mul(Const(e.exp), power(e.base, e.exp - 1), _diff(e.base, s))
    elif isinstance(e, Div):
        return _diff(normalize(e), s)
    elif isinstance(e, Call):
        parts = []
        for i, a in enumerate(e.args):
            da = _diff(a, s)
            if da == ZERO:
                continue
            parts.append(mul(instantiate(e.func.derivative(i), e.args), da))
        out = add(*parts)
    else:  # pragma: no cover
        raise ExprError(f"unknown node {e!r}")
    _memo(e, key, out)
    return out


def instantiate(template: Expr, args: Sequence[Expr]) -> Expr:
    """Replace placeholders ``_0.._k`` of a derivative template by ``args``."""
    return substitute(template, {f"_{i}": a for i, a in enumerate(args)})


def substitute(e: Expr, mapping: Mapping | None = None, functions: Mapping | None = None) -> Expr:
    """Simultaneous substitution of symbols (and optionally function symbols).

    ``mapping`` maps symbol names (or ``Sym``) to expressions. ``functions``
    maps a function's base name to a ``Lambda`` (or ``Function``); derivative
    functions of that base (``f'``, ``xi_x``, ...) are specialized by
    differentiating the lambda body.
    """
    m = {_name(k): wrap(v) for k, v in (mapping or {}).items()}
    fmap = dict(functions or {})
    keys = frozenset(m)
    memo: dict[int, Expr] = {}

    def touches(x: Expr) -> bool:
        if not keys.isdisjoint(x.free_symbols):
            return True
        if fmap:
            return _mentions_function(x, fmap)
        return False

    def go(x: Expr) -> Expr:
        got = memo.get(id(x))
        if got is not None:
            return got
        if not touches(x):
            out = normalize(x)
        elif isinstance(x, Sym):
            out = m.get(x.name, x)
        elif isinstance(x, Add):
            out = add(*(go(t) for t in x.terms))
        elif isinstance(x, Mul):
            out = mul(*(go(f) for f in x.factors))
        elif isinstance(x, Pow):
            out = power(go(x.base), x.exp)
        elif isinstance(x, Div):
            out = div(go(x.num), go(x.den))
        elif isinstance(x, Call):
            args = [go(a) for a in x.args]
            repl = fmap.get(x.func.base)
            if repl is None:
                out = call(x.func, args)
            else:
                out = _apply_function(repl, x.func, args)
        else:
            out = x
        memo[id(x)] = out
        return out

    return go(wrap(e))


def _mentions_function(x: Expr, fmap) -> bool:
    if isinstance(x, Call) and x.func.base in fmap:
        return True
    return any(_mentions_function(c, fmap) for c in x.children)


def _apply_function(repl, func: Function, args) -> Expr:
    if isinstance(repl, Function):
        if any(func.dindex):
            raise DerivativeError(f"cannot rename derivative function {func.name}; pass a Lambda instead")
        return call(repl, args)
    body = repl.body
    for slot, n in enumerate(func.dindex):
        for _ in range(n):
            body = differentiate(body, repl.params[slot])
    return substitute(body, dict(zip(repl.params, args)))


def expand(e: Expr, max_terms: int = 20000) -> Expr:
    """Distribute products over sums and expand positive integer powers of sums."""
    e = normalize(e)
    if isinstance(e, (Const, Sym)):
        return e
    if isinstance(e, Add):
        return add(*(expand(t, max_terms) for t in e.terms))
    if isinstance(e, Call):
        return call(e.func, [expand(a, max_terms) for a in e.args])
    if isinstance(e, Pow):
        b = expand(e.base, max_terms)
        if isinstance(b, Add) and e.exp.denominator == 1 and e.exp > 0:
            out = ONE
            for _ in range(e.exp.numerator):
                out = _distribute(out, b, max_terms)
            return out
        return power(b, e.exp)
    if isinstance(e, Mul):
        out = ONE
        for f in e.factors:
            out = _distribute(out, expand(f, max_terms), max_terms)
        return out
    return e


def _distribute(a: Expr, b: Expr, max_terms: int) -> Expr:
    ta = a.terms if isinstance(a, Add) else (a,)
    tb = b.terms if isinstance(b, Add) else (b,)
    if len(ta) * len(tb) > max_terms:
        raise ExprError("expansion exceeds term limit")
    return add(*(mul(x, y) for x in ta for y in tb))


# ---------------------------------------------------------------------------
# numeric evaluation


def _codegen(e: Expr, argnames: Sequence[str]):
    counts: dict[str, int] = {}
    seen: dict[str, Expr] = {}

    def count(x: Expr):
        k = x.key
        counts[k] = counts.get(k, 0) + 1
        if k in seen:
            return
        seen[k] = x
        for c in x.children:
            count(c)

    count(e)
    names = {n: f"a{i}" for i, n in enumerate(argnames)}
    ns: dict = {"np": np, "_odd_root": _odd_root}
    lines: list[str] = []
    temps: dict[str, str] = {}
    fnames: dict[str, str] = {}

    def fn_ref(f: Function) -> str:
        if f.evaluator is None:
            raise ExprError(f"function {f.name} has no numeric evaluator")
        ref = fnames.get(f.name)
        if ref is None:
            ref = f"F{len(fnames)}"
            fnames[f.name] = ref
            ns[ref] = f.evaluator
        return ref

    def gen(x: Expr) -> str:
        k = x.key
        if k in temps:
            return temps[k]
        if isinstance(x, Const):
            return repr(float(x.value))
        if isinstance(x, Sym):
            if x.name not in names:
                raise UnboundSymbolError(f"unbound symbol {x.name}")
            return names[x.name]
        if isinstance(x, Add):
            code = "(" + " + ".join(gen(t) for t in x.terms) + ")"
        elif isinstance(x, Mul):
            code = "(" + " * ".join(gen(f) for f in x.factors) + ")"
        elif isinstance(x, Div):
            code = f"({gen(x.num)} / {gen(x.den)})"
        elif isinstance(x, Pow):
            b = gen(x.base)
            p, q = x.exp.numerator, x.exp.denominator
            if q == 1:
                code = f"({b} ** {p})" if p != -1 else f"(1.0 / {b})"
            elif q == 2:
                code = f"(np.sqrt({b}) ** {p})" if p != 1 else f"np.sqrt({b})"
            elif q % 2 == 1:
                code = f"_odd_root({b}, {p}, {q})"
            else:
                code = f"({b} ** {p / q!r})"
        elif isinstance(x, Call):
            code = f"{fn_ref(x.func)}(" + ", ".join(gen(a) for a in x.args) + ")"
        else:  # pragma: no cover
            raise ExprError(f"unknown node {x!r}")
        if counts.get(k, 0) > 1:
            t = f"t{len(temps)}"
            lines.append(f"    {t} = {code}")
            temps[k] = t
            return t
        return code

    result = gen(e)
    src = "def _f(" + ", ".join(names[n] for n in argnames) + "):\n"
    src += "\n".join(lines) + ("\n" if lines else "")
    src += f"    return {result} + 0.0 * ({' + '.join(names[n] for n in argnames) or '0.0'})\n"
    exec(compile(src, "<weaksym-expr>", "exec"), ns)
    return ns["_f"]


def lambdify(e: Expr, argnames: Sequence) -> Callable:
    """Vectorized numpy function of ``argnames`` (broadcasting like numpy)."""
    e = normalize(e)
    argnames = tuple(_name(a) for a in argnames)
    key = ("fn", argnames)
    if e._cache is not None and key in e._cache:
        return e._cache[key]
    missing = e.free_symbols - set(argnames)
    if missing:
        raise UnboundSymbolError(f"unbound symbol(s): {', '.join(sorted(missing))}")
    fn = _codegen(e, argnames)
    _memo(e, key, fn)
    return fn


def evaluate_array(e: Expr, argnames: Sequence, *arrays):
    """Evaluate on arrays; numeric faults raise ``DomainError``."""
    fn = lambdify(e, argnames)
    with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
        try:
            out = fn(*(np.asarray(a, dtype=float) for a in arrays))
        except (FloatingPointError, ZeroDivisionError, OverflowError, ValueError) as exc:
            raise DomainError(f"evaluating {render(e)[:80]}: {exc}") from None
    return out


def evaluate(e: Expr, bindings: Mapping) -> float:
    e = normalize(e)
    b = {_name(k): v for k, v in bindings.items()}
    names = tuple(sorted(e.free_symbols))
    missing = [n for n in names if n not in b]
    if missing:
        raise UnboundSymbolError(f"no binding for {', '.join(missing)}")
    out = float(evaluate_array(e, names, *(np.float64(b[n]) for n in names)))
    if not math.isfinite(out):
        raise DomainError(f"non-finite value evaluating {render(e)[:80]}")
    return out


def is_zero(
    e: Expr,
    rng: np.random.Generator | None = None,
    samples: int = 20,
    tol: float = 1e-9,
    ranges: Mapping | None = None,
) -> bool:
    """Semantic zero test: canonical form first, then randomized sampling.

    The numeric fallback is probabilistic: 20 random points (default box
    [-2, 2] per symbol) must all give |e| <= tol * max(1, sum |terms|).
    Points where evaluation leaves the domain are redrawn.
    """
    e = normalize(e)
    if isinstance(e, Const):
        return e.value == 0
    try:
        ex = expand(e, max_terms=4000)
    except ExprError:
        ex = e
    if isinstance(ex, Const):
        return ex.value == 0
    rng = rng if rng is not None else np.random.default_rng(20240917)
    names = tuple(sorted(e.free_symbols))
    ranges = {_name(k): v for k, v in (ranges or {}).items()}
    lo = np.array([ranges.get(n, (-2.0, 2.0))[0] for n in names])
    hi = np.array([ranges.get(n, (-2.0, 2.0))[1] for n in names])
    terms = e.terms if isinstance(e, Add) else (e,)
    got = 0
    for _ in range(samples * 20):
        pt = rng.uniform(lo, hi)
        env = dict(zip(names, pt))
        try:
            v = evaluate(e, env)
            scale = sum(abs(evaluate(t, env)) for t in terms)
        except DomainError:
            continue
        if abs(v) > tol * max(1.0, scale):
            return False
        got += 1
        if got >= samples:
            return True
    raise DomainError(f"could not find {samples} evaluable sample points for zero test")


def is_constant(e: Expr) -> bool:
    return not normalize(e).free_symbols


def const_value(e: Expr) -> float:
    e = normalize(e)
    if not isinstance(e, Const):
        raise ExprError(f"not a constant: {render(e)}")
    return float(e.value)


# ---------------------------------------------------------------------------
# rendering (output re-parses to an equal canonical tree)


def _coef_split(x: Expr):
    if isinstance(x, Mul):
        if isinstance(x.factors[0], Const):
            return x.factors[0].value, x.factors[1:]
        return Fraction(1), x.factors
    if isinstance(x, Const):
        return x.value, ()
    return Fraction(1), (x,)


def _fmt_num(v: Number) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(e: Expr) -> str:
    return _render(e, 0)


_P_ADD, _P_MUL, _P_NEG, _P_POW, _P_ATOM = 10, 20, 25, 30, 40


def _paren(s: str, inner: int, outer: int) -> str:
    return f"({s})" if inner < outer else s


def _render(e: Expr, outer: int) -> str:
    if isinstance(e, Const):
        v = e.value
        s = _fmt_num(v)
        if v < 0:
            return _paren(s, _P_NEG, outer)
        if isinstance(v, Fraction) and v.denominator != 1:
            return _paren(s, _P_MUL, outer)
        return s
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Call):
        return f"{e.func.name}(" + ", ".join(_render(a, 0) for a in e.args) + ")"
    if isinstance(e, Div):
        s = f"{_render(e.num, _P_MUL)}/{_render(e.den, _P_MUL + 1)}"
        return _paren(s, _P_MUL, outer)
    if isinstance(e, Pow):
        x = e.exp
        if x.denominator == 1 and x < 0:
            s = "1/" + _render(power(e.base, -x) if x != -1 else e.base, _P_MUL + 1)
            return _paren(s, _P_MUL, outer)
        ex = str(x) if (x.denominator == 1 and x > 0) else f"({x})"
        return _paren(f"{_render(e.base, _P_POW + 1)}^{ex}", _P_POW, outer)
    if isinstance(e, Add):
        parts = []
        for i, t in enumerate(e.terms):
            c, rest = _coef_split(t)
            neg = c < 0
            body = _render_product(abs(c) if neg else c, rest)
            if i == 0:
                parts.append(("-" + body) if neg else body)
            else:
                parts.append((" - " if neg else " + ") + body)
        return _paren("".join(parts), _P_ADD, outer)
    if isinstance(e, Mul):
        c, rest = _coef_split(e)
        if c < 0:
            return _paren("-" + _render_product(-c, rest), _P_NEG, outer)
        return _paren(_render_product(c, rest), _P_MUL, outer)
    raise ExprError(f"cannot render {e!r}")  # pragma: no cover


def _render_product(c: Number, factors: Sequence[Expr]) -> str:
    num, den = [], []
    for f in factors:
        if isinstance(f, Pow) and f.exp < 0:
            den.append(power(f.base, -f.exp) if f.exp != -1 else f.base)
        else:
            num.append(f)
    nums = [_render(f, _P_MUL) for f in num]
    if c != 1 or isinstance(c, float) or not nums:
        if isinstance(c, Fraction) and c.denominator != 1:
            if nums:
                nums.insert(0, f"({c})")
            else:
                nums.insert(0, str(c))
        else:
            nums.insert(0, _fmt_num(c))
    s = "*".join(nums)
    if den:
        d = "*".join(_render(f, _P_MUL) for f in den)
        s += "/" + (f"({d})" if len(den) > 1 else _render(den[0], _P_MUL + 1))
    return s


def symbols(names: str) -> tuple:
    return tuple(Sym(n) for n in names.replace(",", " ").split())


def free_symbol_names(exprs: Iterable[Expr]) -> frozenset:
    out = set()
    for e in exprs:
        out |= wrap(e).free_symbols
    return frozenset(out)
