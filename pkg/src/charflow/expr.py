"""Expression DSL for scalar functions on phase space.

Grammar (EBNF, standard infix precedence ``^`` > unary ``-`` > ``* /`` > ``+ -``,
left-associative except ``^`` which is right-associative)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ] ;
    atom    = NUMBER | NAME | NAME , "(" , expr , ")" | "(" , expr , ")" ;

NAME is either a declared variable or one of the functions sin, cos, exp,
log, sqrt.  Exponents must fold to a constant.  Trees are immutable and
hashable; evaluation is deterministic (same tree + same assignment gives a
bit-identical result).  Differentiation is exact, with best-effort
simplification (constant folding and 0/1 identities only -- no canonical
form is promised, so expression equality should be tested by evaluation).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Call",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "VarContext",
    "ParseError",
    "DomainError",
    "parse",
    "evaluate",
    "diff",
    "gradient",
    "substitute",
    "format_expr",
    "node_count",
    "compile_exprs",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ParseError(ValueError):
    """Syntax or name-resolution error, with a 1-based source position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (column {position})")
        self.message = message
        self.position = position


class DomainError(ArithmeticError):
    """Evaluation hit a domain violation (log/sqrt/division/power)."""

    def __init__(self, message: str, expr: "Expr | None" = None):
        self.expr = expr
        if expr is not None:
            message = f"{message} in subexpression '{format_expr(expr)}'"
        super().__init__(message)


class Expr:
    """Base class for expression tree nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_expr(self)

    # Operator overloads build simplified nodes, handy for assembling
    # expressions programmatically (tests, lifts, Poisson oracles).
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, other):
        return power(self, _coerce(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Call(Expr):
    fn: str
    arg: Expr


@dataclass(frozen=True, slots=True)
class Add(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Sub(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Div(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: Const


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(float(value))


# ---------------------------------------------------------------------------
# Smart constructors: constant folding plus 0/1 identities.

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(base: Expr, exponent: Expr | float) -> Expr:
    exponent = _coerce(exponent)
    if not isinstance(exponent, Const):
        raise ValueError("exponent must be a constant")
    if exponent.value == 1.0:
        return base
    if exponent.value == 0.0:
        return ONE
    if isinstance(base, Const):
        try:
            return Const(_pow_value(base.value, exponent.value))
        except (DomainError, OverflowError):
            pass  # leave unfolded; evaluation reports the domain error
    return Pow(base, exponent)


def call(fn: str, arg: Expr) -> Expr:
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function '{fn}'")
    if isinstance(arg, Const):
        try:
            return Const(_apply_fn(fn, arg.value))
        except (DomainError, OverflowError):
            pass
    return Call(fn, arg)


# ---------------------------------------------------------------------------
# Variable contexts.


@dataclass(frozen=True)
class VarContext:
    """Declared phase-space variables: x1..xn, p1..pn and, if full, u."""

    n: int
    kind: str  # "reduced" (d = 2n) or "full" (d = 2n + 1)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension n must be >= 1")
        if self.kind not in ("reduced", "full"):
            raise ValueError(f"kind must be 'reduced' or 'full', got {self.kind!r}")

    @property
    def dim(self) -> int:
        return 2 * self.n + (1 if self.kind == "full" else 0)

    @property
    def x_names(self) -> tuple[str, ...]:
        return tuple(f"x{i}" for i in range(1, self.n + 1))

    @property
    def p_names(self) -> tuple[str, ...]:
        return tuple(f"p{i}" for i in range(1, self.n + 1))

    @property
    def names(self) -> tuple[str, ...]:
        base = self.x_names + self.p_names
        return base + ("u",) if self.kind == "full" else base

    def parse(self, source: str) -> Expr:
        return parse(source, self)


# ---------------------------------------------------------------------------
# Parser (recursive descent).

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            rest = source[pos:].lstrip()
            if not rest:
                break
            col = len(source) - len(rest) + 1
            raise ParseError(f"unexpected character {rest[0]!r}", col)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    tokens.append(("end", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, source: str, names: Sequence[str]):
        self.tokens = _tokenize(source)
        self.names = set(names)
        self.idx = 0

    def peek(self):
        return self.tokens[self.idx]

    def advance(self):
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected '{op}'", pos)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                e = add(e, rhs) if text == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.unary()
                e = mul(e, rhs) if text == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            exponent = self.unary()  # right-associative
            if not isinstance(exponent, Const):
                raise ParseError("exponent must be a constant", pos)
            return power(base, exponent)
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return call(text, arg)
            if text in self.names:
                return Var(text)
            if text == "u":
                raise ParseError(
                    'unknown identifier "u" (only defined in a full context)', pos
                )
            raise ParseError(f'unknown identifier "{text}"', pos)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        shown = text if text else "end of input"
        raise ParseError(f"unexpected token {shown!r}", pos)


def parse(source: str, ctx: VarContext | Sequence[str]) -> Expr:
    """Parse ``source`` against the declared variables of ``ctx``.

    ``ctx`` may be a :class:`VarContext` or an explicit sequence of
    variable names (used for parameter expressions).
    """
    names = ctx.names if isinstance(ctx, VarContext) else tuple(ctx)
    return _Parser(source, names).parse()


# ---------------------------------------------------------------------------
# Evaluation.


def _apply_fn(fn: str, v: float) -> float:
    if fn == "sin":
        return math.sin(v)
    if fn == "cos":
        return math.cos(v)
    if fn == "exp":
        return math.exp(v)
    if fn == "log":
        if v <= 0.0:
            raise DomainError(f"log of non-positive value {v!r}")
        return math.log(v)
    if fn == "sqrt":
        if v < 0.0:
            raise DomainError(f"sqrt of negative value {v!r}")
        return math.sqrt(v)
    raise ValueError(f"unknown function '{fn}'")


def _pow_value(base: float, exponent: float) -> float:
    if float(exponent).is_integer():
        if base == 0.0 and exponent < 0.0:
            raise DomainError("zero raised to a negative power")
        return base ** int(exponent)
    if base < 0.0:
        raise DomainError(
            f"negative base {base!r} with non-integer exponent {exponent!r}"
        )
    if base == 0.0 and exponent < 0.0:
        raise DomainError("zero raised to a negative power")
    return base**exponent


def evaluate(e: Expr, z) -> float:
    """Evaluate ``e`` at ``z`` (a PhasePoint or a name->value mapping)."""
    env = z.mapping if hasattr(z, "mapping") else z
    return _eval(e, env)


def _eval(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Add):
        return _eval(e.lhs, env) + _eval(e.rhs, env)
    if isinstance(e, Sub):
        return _eval(e.lhs, env) - _eval(e.rhs, env)
    if isinstance(e, Mul):
        return _eval(e.lhs, env) * _eval(e.rhs, env)
    if isinstance(e, Div):
        denom = _eval(e.rhs, env)
        if denom == 0.0:
            raise DomainError("division by zero", e)
        return _eval(e.lhs, env) / denom
    if isinstance(e, Pow):
        base = _eval(e.base, env)
        try:
            return _pow_value(base, e.exponent.value)
        except DomainError as err:
            raise DomainError(str(err), e) from None
    if isinstance(e, Call):
        v = _eval(e.arg, env)
        try:
            return _apply_fn(e.fn, v)
        except DomainError as err:
            raise DomainError(str(err), e) from None
        except OverflowError:
            raise DomainError("overflow", e) from None
    raise TypeError(f"not an Expr node: {e!r}")


# ---------------------------------------------------------------------------
# Differentiation (exact).


def diff(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(diff(e.arg, var))
    if isinstance(e, Add):
        return add(diff(e.lhs, var), diff(e.rhs, var))
    if isinstance(e, Sub):
        return sub(diff(e.lhs, var), diff(e.rhs, var))
    if isinstance(e, Mul):
        return add(
            mul(diff(e.lhs, var), e.rhs),
            mul(e.lhs, diff(e.rhs, var)),
        )
    if isinstance(e, Div):
        if isinstance(e.rhs, Const):
            return div(diff(e.lhs, var), e.rhs)
        num = sub(
            mul(diff(e.lhs, var), e.rhs),
            mul(e.lhs, diff(e.rhs, var)),
        )
        return div(num, power(e.rhs, 2.0))
    if isinstance(e, Pow):
        c = e.exponent.value
        return mul(
            mul(Const(c), power(e.base, c - 1.0)),
            diff(e.base, var),
        )
    if isinstance(e, Call):
        inner = diff(e.arg, var)
        if e.fn == "sin":
            outer = call("cos", e.arg)
        elif e.fn == "cos":
            outer = neg(call("sin", e.arg))
        elif e.fn == "exp":
            outer = call("exp", e.arg)
        elif e.fn == "log":
            return div(inner, e.arg)
        elif e.fn == "sqrt":
            return div(inner, mul(Const(2.0), call("sqrt", e.arg)))
        else:  # pragma: no cover
            raise ValueError(f"unknown function '{e.fn}'")
        return mul(outer, inner)
    raise TypeError(f"not an Expr node: {e!r}")


def gradient(e: Expr, ctx: VarContext | Sequence[str]) -> list[Expr]:
    """Componentwise derivative in the fixed variable order of ``ctx``.

    The order (x-block, p-block, then u) is a binding contract for all
    downstream matrix algebra.
    """
    names = ctx.names if isinstance(ctx, VarContext) else tuple(ctx)
    return [diff(e, name) for name in names]


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions, re-simplifying as it rebuilds."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Add):
        return add(substitute(e.lhs, mapping), substitute(e.rhs, mapping))
    if isinstance(e, Sub):
        return sub(substitute(e.lhs, mapping), substitute(e.rhs, mapping))
    if isinstance(e, Mul):
        return mul(substitute(e.lhs, mapping), substitute(e.rhs, mapping))
    if isinstance(e, Div):
        return div(substitute(e.lhs, mapping), substitute(e.rhs, mapping))
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Call):
        return call(e.fn, substitute(e.arg, mapping))
    raise TypeError(f"not an Expr node: {e!r}")


# ---------------------------------------------------------------------------
# Printing.  Precedence levels: + - (1) < * / (2) < unary - (3) < ^ (4) < atom (5).


def _prec(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, (Mul, Div)):
        return 2
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3  # prints with a leading minus, same binding as unary -
    if isinstance(e, Pow):
        return 4
    return 5


def _fmt_const(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_expr(e: Expr) -> str:
    """Render ``e`` as DSL source; parse(format_expr(e)) rebuilds ``e``."""
    return _fmt(e, 0)


def _fmt(e: Expr, min_prec: int) -> str:
    p = _prec(e)
    if isinstance(e, Const):
        s = _fmt_const(e.value)
    elif isinstance(e, Var):
        s = e.name
    elif isinstance(e, Call):
        s = f"{e.fn}({_fmt(e.arg, 0)})"
    elif isinstance(e, Neg):
        s = f"-{_fmt(e.arg, 3)}"
    elif isinstance(e, Add):
        s = f"{_fmt(e.lhs, 1)} + {_fmt(e.rhs, 2)}"
    elif isinstance(e, Sub):
        s = f"{_fmt(e.lhs, 1)} - {_fmt(e.rhs, 2)}"
    elif isinstance(e, Mul):
        s = f"{_fmt(e.lhs, 2)}*{_fmt(e.rhs, 3)}"
    elif isinstance(e, Div):
        s = f"{_fmt(e.lhs, 2)}/{_fmt(e.rhs, 3)}"
    elif isinstance(e, Pow):
        s = f"{_fmt(e.base, 5)}^{_fmt_const(e.exponent.value)}"
    else:  # pragma: no cover
        raise TypeError(f"not an Expr node: {e!r}")
    if p < min_prec:
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# Introspection and compilation.


def subexpressions(e: Expr) -> Iterator[Expr]:
    """Yield every node of the tree (with repetition)."""
    yield e
    if isinstance(e, (Neg, Call)):
        yield from subexpressions(e.arg)
    elif isinstance(e, (Add, Sub, Mul, Div)):
        yield from subexpressions(e.lhs)
        yield from subexpressions(e.rhs)
    elif isinstance(e, Pow):
        yield from subexpressions(e.base)
        yield from subexpressions(e.exponent)


def node_count(e: Expr) -> int:
    """Number of distinct subexpressions (shared subtrees count once)."""
    return len(set(subexpressions(e)))


def _emit(e: Expr, index: Mapping[str, int]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"_z[{index[e.name]}]"
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg, index)})"
    if isinstance(e, Add):
        return f"({_emit(e.lhs, index)} + {_emit(e.rhs, index)})"
    if isinstance(e, Sub):
        return f"({_emit(e.lhs, index)} - {_emit(e.rhs, index)})"
    if isinstance(e, Mul):
        return f"({_emit(e.lhs, index)} * {_emit(e.rhs, index)})"
    if isinstance(e, Div):
        return f"({_emit(e.lhs, index)} / {_emit(e.rhs, index)})"
    if isinstance(e, Pow):
        c = e.exponent.value
        if c.is_integer():
            return f"({_emit(e.base, index)})**{int(c)}"
        return f"_pow({_emit(e.base, index)}, {repr(c)})"
    if isinstance(e, Call):
        return f"_{e.fn}({_emit(e.arg, index)})"
    raise TypeError(f"not an Expr node: {e!r}")


_COMPILE_GLOBALS = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_log": math.log,
    "_sqrt": math.sqrt,
    "_pow": _pow_value,
}


def compile_exprs(
    exprs: Sequence[Expr], names: Sequence[str]
) -> Callable[[Sequence[float]], tuple[float, ...]]:
    """Compile expressions into one fast callable on coordinate sequences.

    The generated code performs the exact arithmetic sequence of
    :func:`evaluate`, so results are bit-identical to the tree walk.
    Domain violations surface as ValueError/ZeroDivisionError from the
    math layer rather than as :class:`DomainError`.
    """
    index = {name: i for i, name in enumerate(names)}
    body = ", ".join(_emit(e, index) for e in exprs)
    if len(exprs) == 1:
        body += ","
    source = f"def _compiled(_z):\n    return ({body})\n"
    namespace = dict(_COMPILE_GLOBALS)
    exec(compile(source, "<charflow-expr>", "exec"), namespace)
    return namespace["_compiled"]
