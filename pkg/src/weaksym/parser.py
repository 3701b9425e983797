"""Pratt parser for the expression grammar.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ ("^" | "**") unary ] ;        (* right associative *)
    atom    = number | name | name "(" expr { "," expr } ")" | "(" expr ")" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "-" | "+" ] digits ] ;
    name    = letter { letter | digit | "_" } ;

Exponents must reduce to rational constants. Integers are exact rationals;
decimal literals become float constants. Jet coordinates are ordinary names
such as ``u_xt`` declared in the symbol table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import Add, Call, Const, Div, Expr, Mul, Pow, Sym, normalize
from .table import SymbolTable


class ParseError(ValueError):
    def __init__(self, message: str, text: str = "", pos: int = -1):
        self.message = message
        self.text = text
        self.pos = pos
        where = f" at position {pos}" if pos >= 0 else ""
        super().__init__(f"{message}{where}")


@dataclass
class Token:
    kind: str  # num, name, op, end
    text: str
    pos: int


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        tok = m.group(kind)
        start = m.start(kind)
        if tok == "**":
            tok = "^"
        out.append(Token(kind, tok, start))
        pos = m.end()
    out.append(Token("end", "", n))
    return out


_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_RBP = 25


class _Parser:
    def __init__(self, text: str, table: SymbolTable, template: bool):
        self.text = text
        self.table = table
        self.template = template
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(msg, self.text, tok.pos)

    def expect(self, text: str):
        if self.tok.text != text or self.tok.kind == "end":
            self.fail(f"expected {text!r}" + (f", found {self.tok.text!r}" if self.tok.text else ", found end of input"))
        self.advance()

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            self.fail("empty expression")
        e = self.expression(0)
        if self.tok.kind != "end":
            self.fail(f"unexpected {self.tok.text!r}")
        return e

    def expression(self, rbp: int) -> Expr:
        left = self.nud(self.advance())
        while self.tok.kind == "op" and _LBP.get(self.tok.text, 0) > rbp:
            left = self.led(self.advance(), left)
        return left

    def nud(self, t: Token) -> Expr:
        if t.kind == "num":
            if re.fullmatch(r"\d+", t.text):
                return Const(Fraction(int(t.text)))
            return Const(float(t.text))
        if t.kind == "name":
            if self.tok.text == "(":
                return self.call(t)
            return self.symbol(t)
        if t.text == "(":
            e = self.expression(0)
            self.expect(")")
            return e
        if t.text == "-":
            operand = self.expression(_UNARY_RBP)
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Mul((Const(-1), operand))
        if t.text == "+":
            return self.expression(_UNARY_RBP)
        if t.kind == "end":
            self.fail("unexpected end of input", t)
        self.fail(f"unexpected {t.text!r}", t)

    def led(self, t: Token, left: Expr) -> Expr:
        op = t.text
        if op == "^":
            right = self.expression(_LBP["^"] - 1)
            exp = normalize(right)
            if not isinstance(exp, Const):
                self.fail("exponent must be a rational constant", t)
            try:
                return Pow(left, exp.value)
            except Exception:
                self.fail(f"exponent {exp} is not a rational number", t)
        right = self.expression(_LBP[op])
        if op == "+":
            return Add((left, right))
        if op == "-":
            neg = Const(-right.value) if isinstance(right, Const) else Mul((Const(-1), right))
            return Add((left, neg))
        if op == "*":
            return Mul((left, right))
        return Div(left, right)

    def symbol(self, t: Token) -> Expr:
        name = t.text
        if self.template and re.fullmatch(r"_\d+", name):
            return Sym(name)
        if self.table.role(name) is None:
            if self.table.function(name) is not None:
                self.fail(f"function {name!r} used without arguments", t)
            self.fail(f"unknown symbol {name!r}", t)
        return Sym(name)

    def call(self, t: Token) -> Expr:
        fn = self.table.function(t.text)
        if fn is None:
            self.fail(f"unknown function {t.text!r}", t)
        self.expect("(")
        args = [self.expression(0)]
        while self.tok.text == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")")
        if len(args) != fn.arity:
            self.fail(f"{fn.name} expects {fn.arity} argument(s), got {len(args)}", t)
        return Call(fn, args)


def parse(text: str, table: SymbolTable, template: bool = False) -> Expr:
    """Parse ``text`` into a raw expression tree resolved against ``table``."""
    return _Parser(text, table, template).parse()
