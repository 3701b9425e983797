"""Symbol declarations and the opaque function registry."""

from __future__ import annotations

import enum
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .expr import (
    ELEMENTARY,
    ONE,
    Const,
    DomainError,
    ExprError,
    Function,
    Sym,
    call,
    div,
    mul,
    placeholder,
    power,
)


class Role(enum.Enum):
    INDEPENDENT = "independent"
    JET = "jet"
    PARAMETER = "parameter"
    QUADRATURE = "quadrature"
    REGULARIZATION = "regularization"
    CONSTANT = "constant"


RESERVED = {"eta": Role.PARAMETER, "tau": Role.QUADRATURE, "eps": Role.REGULARIZATION}


class SymbolTable:
    """Declared symbols with roles, plus registered (opaque) functions."""

    def __init__(self):
        self.roles: dict[str, Role] = dict(RESERVED)
        self.functions: dict[str, Function] = {}

    def declare(self, name: str, role: Role | str) -> Sym:
        role = Role(role)
        if not name.isidentifier() or name.startswith("_"):
            raise ExprError(f"invalid symbol name {name!r}")
        if name in ELEMENTARY or name in self.functions:
            raise ExprError(f"{name!r} is already a function name")
        have = self.roles.get(name)
        if have is not None and have is not role:
            raise ExprError(f"symbol {name!r} already declared as {have.value}")
        self.roles[name] = role
        return Sym(name)

    def declare_many(self, names: Iterable[str], role: Role | str) -> tuple:
        return tuple(self.declare(n, role) for n in names)

    def role(self, name: str) -> Role | None:
        return self.roles.get(name)

    def symbols_with(self, role: Role | str) -> list[str]:
        role = Role(role)
        return [n for n, r in self.roles.items() if r is role]

    def register(self, fn: Function) -> Function:
        if fn.name in self.roles:
            raise ExprError(f"{fn.name!r} is already a symbol")
        if fn.name in ELEMENTARY:
            raise ExprError(f"{fn.name!r} shadows an elementary function")
        self.functions[fn.name] = fn
        return fn

    def function(self, name: str) -> Function | None:
        if name in ELEMENTARY:
            return ELEMENTARY[name]
        return self.functions.get(name)

    def parse(self, text: str):
        from .parser import parse

        return parse(text, self)

    def unknown(self, name: str, args: Sequence[str]) -> Function:
        """Arbitrary smooth function of ``args`` (for determining equations).

        Derivatives are new unknown functions named ``name_<letters>``, e.g.
        ``xi_xt`` for the mixed x,t derivative of ``xi(x, t)``.
        """
        args = tuple(args)
        fn = _unknown(name, args, (0,) * len(args))
        self.register(fn)
        return fn

    def check_inverses(self, samples: Sequence[float] | np.ndarray, tol: float = 1e-10) -> dict[str, float]:
        """Round-trip |f^-1(f(u)) - u| for every function with a declared inverse."""
        out = {}
        pts = np.asarray(samples, dtype=float)
        for fn in self.functions.values():
            if fn.inverse is None or fn.arity != 1:
                continue
            inv = self.function(fn.inverse)
            if inv is None or inv.evaluator is None or fn.evaluator is None:
                continue
            with np.errstate(all="ignore"):
                back = inv.evaluator(fn.evaluator(pts))
            good = np.isfinite(back)
            err = float(np.max(np.abs(back[good] - pts[good]))) if good.any() else np.inf
            if err > tol:
                raise DomainError(f"inverse round trip for {fn.name} fails: max error {err:.3g}")
            out[fn.name] = err
        return out


def _unknown(base: str, args: tuple, dindex: tuple) -> Function:
    letters = "".join(a * n for a, n in zip(args, dindex))
    name = base if not letters else f"{base}_{letters}"

    def deriv(slot: int):
        idx = list(dindex)
        idx[slot] += 1
        child = _unknown(base, args, tuple(idx))
        return call(child, [placeholder(i) for i in range(len(args))])

    return Function(name, len(args), None, deriv, base=base, dindex=dindex)


# ---------------------------------------------------------------------------
# scalar function families for u_t + f(u) u_x type models


def _names(k: int) -> str:
    return "f" + "p" * k if k <= 3 else f"f{k}"


def register_family(table: SymbolTable, kind: str) -> dict[str, Function]:
    """Register f, its derivatives fp, fpp, ..., inverse finv and primitive F.

    ``kind`` is one of ``id``, ``exp``, ``sinh``, ``cube`` (f(u) = u^3 + u).
    The functions stay opaque; ``family_lambdas`` gives closed forms for
    specialization.
    """
    ev = _FAMILIES.get(kind)
    if ev is None:
        raise ExprError(f"unknown function family {kind!r}; choose from {sorted(_FAMILIES)}")
    derivs, inv_eval, prim_eval = ev
    x = placeholder(0)
    made: dict[int, Function] = {}

    def fk(k: int) -> Function:
        if k in made:
            return made[k]
        fn = Function(_names(k), 1, derivs(k), [lambda k=k: call(fk(k + 1), [x])], base="f", dindex=(k,))
        made[k] = fn
        return fn

    f = fk(0)
    f.inverse = "finv"
    fp, fpp = fk(1), fk(2)
    finv = Function("finv", 1, inv_eval, inverse="f")
    finv._derivatives = [lambda: div(ONE, call(fp, [call(finv, [x])]))]
    prim = Function("F", 1, prim_eval, [lambda: call(f, [x])])
    out = {"f": f, "fp": fp, "fpp": fpp, "finv": finv, "F": prim}
    for fn in out.values():
        table.register(fn)
    return out


def family_lambdas(kind: str) -> dict:
    """Closed-form Lambdas for specializing the opaque family functions."""
    from .expr import EXP, LOG, Lambda

    x = placeholder(0)
    if kind == "id":
        return {"f": Lambda((x,), x), "finv": Lambda((x,), x), "F": Lambda((x,), mul(Const(Fraction(1, 2)), power(x, 2)))}
    if kind == "exp":
        e = call(EXP, [x])
        return {"f": Lambda((x,), e), "finv": Lambda((x,), call(LOG, [x])), "F": Lambda((x,), e)}
    raise ExprError(f"no closed form recorded for family {kind!r}")


def _deriv_cycle(funcs: Sequence[Callable]) -> Callable[[int], Callable]:
    return lambda k: funcs[k % len(funcs)]


def _cube_derivs(k: int) -> Callable:
    table = [
        lambda u: u**3 + u,
        lambda u: 3 * u**2 + 1,
        lambda u: 6 * u,
        lambda u: 6.0 + 0 * u,
    ]
    return table[k] if k < 4 else (lambda u: 0.0 * u)


def _cube_inverse(y):
    y = np.asarray(y, dtype=float)
    # Cardano for u^3 + u - y = 0 (single real root)
    d = np.sqrt(y**2 / 4 + 1 / 27)
    return np.cbrt(y / 2 + d) + np.cbrt(y / 2 - d)


_FAMILIES = {
    "id": (
        lambda k: (lambda u: u) if k == 0 else (lambda u: 1.0 + 0 * u) if k == 1 else (lambda u: 0.0 * u),
        lambda y: y,
        lambda u: 0.5 * u * u,
    ),
    "exp": (_deriv_cycle([np.exp]), np.log, np.exp),
    "sinh": (_deriv_cycle([np.sinh, np.cosh]), np.arcsinh, np.cosh),
    "cube": (_cube_derivs, _cube_inverse, lambda u: u**4 / 4 + u**2 / 2),
}


FAMILY_KINDS = tuple(sorted(_FAMILIES))
