"""Scalar expression trees: parsing, printing, differentiation, evaluation.

Expressions are immutable trees of :class:`Const`, :class:`Sym`, :class:`Neg`,
:class:`Func` and the binary nodes :class:`Add`, :class:`Sub`, :class:`Mul`,
:class:`Div`, :class:`Pow`.  Values are complex throughout; ``i`` is a literal
constant and ``hbar`` an ordinary symbol whose default binding is 1.

Equality of two formulas is decided numerically by :func:`equiv`, which samples
both sides on a box with a fixed seed.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sinh", "cosh", "sqrt")
RESERVED = frozenset(FUNCTIONS) | {"pi", "i", "hbar"}
HBAR = "hbar"
DEFAULT_SEED = 20240611


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnboundSymbolError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unbound symbol {name!r}")
        self.name = name


class DomainError(ExprError):
    def __init__(self, message: str, node: "Expr"):
        super().__init__(f"{message} in {to_string(node)}")
        self.node = node


class EquivError(ExprError):
    """Raised when sampling cannot find enough points where both sides evaluate."""


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ("_hash", "_str", "_free")

    def _init(self, key) -> None:
        self._hash = hash(key)
        self._str = None
        self._free = None

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return type(self) is type(other) and self._fields() == other._fields()

    def _fields(self) -> tuple:
        raise NotImplementedError

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        args = ", ".join(repr(f) for f in self._fields())
        return f"{type(self).__name__}({args})"

    # arithmetic builds simplified trees
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: complex):
        value = complex(value)
        self.value = complex(value.real + 0.0, value.imag + 0.0)
        self._init(("C", self.value))

    def _fields(self):
        return (self.value,)


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._init(("S", name))

    def _fields(self):
        return (self.name,)


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self._init(("N", arg._hash))

    def _fields(self):
        return (self.arg,)

    @property
    def children(self):
        return (self.arg,)


class Func(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ExprError(f"unknown function {name!r}")
        self.name = name
        self.arg = arg
        self._init(("F", name, arg._hash))

    def _fields(self):
        return (self.name, self.arg)

    @property
    def children(self):
        return (self.arg,)


class Binary(Expr):
    __slots__ = ("left", "right")
    op = "?"

    def __init__(self, left: Expr, right: Expr):
        self.left = left
        self.right = right
        self._init((self.op, left._hash, right._hash))

    def _fields(self):
        return (self.left, self.right)

    @property
    def children(self):
        return (self.left, self.right)


class Add(Binary):
    __slots__ = ()
    op = "+"


class Sub(Binary):
    __slots__ = ()
    op = "-"


class Mul(Binary):
    __slots__ = ()
    op = "*"


class Div(Binary):
    __slots__ = ()
    op = "/"


class Pow(Binary):
    __slots__ = ()
    op = "^"


_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div, "^": Pow}

ZERO = Const(0)
ONE = Const(1)
I = Const(1j)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, complex, np.number)):
        return Const(complex(value))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def sym(name: str) -> Sym:
    return Sym(name)


def free_symbols(e: Expr) -> frozenset[str]:
    if e._free is None:
        if isinstance(e, Sym):
            e._free = frozenset((e.name,))
        elif isinstance(e, Const):
            e._free = frozenset()
        else:
            out = frozenset()
            for c in e.children:
                out |= free_symbols(c)
            e._free = out
    return e._free


def is_const(e: Expr, value: complex | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# ---------------------------------------------------------------------------
# smart constructors: constant folding and 0/1 absorption


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, Sub):
        return Sub(a.right, a.left)
    if isinstance(a, Mul) and isinstance(a.left, Const):
        return mul(Const(-a.left.value), a.right)
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if is_const(a, 0):
        return b
    if is_const(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.arg)
    if isinstance(b, Const) and b.value.real < 0 and b.value.imag == 0:
        return Sub(a, Const(-b.value))
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if is_const(b, 0):
        return a
    if is_const(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if is_const(a, 0) or is_const(b, 0):
        return ZERO
    if is_const(a, 1):
        return b
    if is_const(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(b, Const):
        a, b = b, a
    if isinstance(a, Const):
        if a.value == -1:
            return neg(b)
        if isinstance(b, Mul) and isinstance(b.left, Const):
            return mul(Const(a.value * b.left.value), b.right)
        if isinstance(b, Neg):
            return mul(Const(-a.value), b.arg)
        return Mul(a, b)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    if isinstance(b, Mul) and isinstance(b.left, Const):
        return mul(b.left, mul(a, b.right))
    if isinstance(a, Mul) and isinstance(a.left, Const):
        return mul(a.left, mul(a.right, b))
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if is_const(b, 1):
        return a
    if is_const(a, 0) and not is_const(b, 0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    if isinstance(b, Const) and b.value != 0:
        return mul(Const(1 / b.value), a)
    if a == b:
        return ONE
    if isinstance(a, Neg):
        return neg(div(a.arg, b))
    if isinstance(a, Mul) and isinstance(a.left, Const):
        return mul(a.left, div(a.right, b))
    return Div(a, b)


def _integer(value: complex) -> int | None:
    if value.imag == 0 and value.real == int(value.real) and abs(value.real) < 2**31:
        return int(value.real)
    return None


def power(a: Expr, b: Expr) -> Expr:
    if is_const(b, 0):
        return ONE
    if is_const(b, 1):
        return a
    if is_const(a, 1):
        return ONE
    if isinstance(a, Const) and isinstance(b, Const):
        k = _integer(b.value)
        if k is not None and (k >= 0 or a.value != 0):
            return Const(a.value**k)
        if a.value != 0:
            return Const(a.value**b.value)
    if isinstance(b, Const):
        k = _integer(b.value)
        if isinstance(a, Pow) and isinstance(a.right, Const) and k is not None:
            return power(a.left, Const(a.right.value * k))
        if isinstance(a, Neg) and k is not None:
            inner = power(a.arg, b)
            return inner if k % 2 == 0 else neg(inner)
    return Pow(a, b)


_CMATH = {
    "sin": cmath.sin,
    "cos": cmath.cos,
    "tan": cmath.tan,
    "exp": cmath.exp,
    "log": cmath.log,
    "sinh": cmath.sinh,
    "cosh": cmath.cosh,
    "sqrt": cmath.sqrt,
}


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        if name == "log" and a.value == 0:
            return Func(name, a)
        if name in ("exp", "cosh", "cos") and a.value == 0:
            return ONE
        if name in ("sin", "tan", "sinh", "sqrt") and a.value == 0:
            return ZERO
        if name == "log" and a.value == 1:
            return ZERO
    if name == "exp" and isinstance(a, Func) and a.name == "log":
        return a.arg
    return Func(name, a)


def _rebuild(e: Expr, children: Sequence[Expr]) -> Expr:
    if isinstance(e, Neg):
        return neg(children[0])
    if isinstance(e, Func):
        return func(e.name, children[0])
    if isinstance(e, Binary):
        return _SMART[e.op](children[0], children[1])
    return e


_SMART = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def _map_dag(e: Expr, leaf: Callable[[Expr], Expr]) -> Expr:
    """Rebuild ``e`` bottom-up, replacing leaves via ``leaf``; shared subtrees visited once."""
    memo: dict[int, Expr] = {}

    def go(node: Expr) -> Expr:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Const, Sym)):
            out = leaf(node)
        else:
            out = _rebuild(node, [go(c) for c in node.children])
        memo[key] = out
        return out

    return go(e)


def substitute(e: Expr, mapping: Mapping[str, Expr | complex | str]) -> Expr:
    """Replace symbols by expressions (simultaneously)."""
    table = {k: as_expr(v) for k, v in mapping.items()}
    if not table or not (free_symbols(e) & table.keys()):
        return e
    return _map_dag(e, lambda n: table.get(n.name, n) if isinstance(n, Sym) else n)


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5
_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}


def _format_real(x: float) -> str:
    if x == math.pi:
        return "pi"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _const_tree(value: complex) -> Expr:
    """Parse-shaped tree for a constant; literal leaves are nonnegative reals or ``i``."""
    re_, im = value.real, value.imag

    def real_tree(x: float) -> Expr:
        return Neg(Const(-x)) if x < 0 else Const(x)

    def imag_tree(y: float) -> Expr:
        mag = I if abs(y) == 1 else Mul(Const(abs(y)), I)
        return Neg(mag) if y < 0 else mag

    if im == 0:
        return real_tree(re_)
    if re_ == 0:
        return imag_tree(im)
    im_mag = I if abs(im) == 1 else Mul(Const(abs(im)), I)
    return (Sub if im < 0 else Add)(real_tree(re_), im_mag)


def _const_prec(value: complex) -> int:
    tree = _const_tree(value)
    if isinstance(tree, Const):
        return _PREC_ATOM
    return _prec(tree)


def _prec(e: Expr) -> int:
    if isinstance(e, Const):
        return _const_prec(e.value)
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC_NEG
    return _PREC_ATOM


def to_string(e: Expr) -> str:
    """Print in the input grammar with minimal parentheses; ``parse(to_string(e))`` re-reads it."""
    if e._str is not None:
        return e._str
    if isinstance(e, Const):
        v = e.value
        if v.imag == 0 and v.real >= 0:
            s = _format_real(v.real)
        elif v == 1j:
            s = "i"
        else:
            s = to_string(_const_tree(v))
    elif isinstance(e, Sym):
        s = e.name
    elif isinstance(e, Func):
        s = f"{e.name}({to_string(e.arg)})"
    elif isinstance(e, Neg):
        s = "-" + _wrap(e.arg, _prec(e.arg) < _PREC_NEG)
    else:
        p = _PREC[e.op]
        if e.op == "^":
            left = _wrap(e.left, _prec(e.left) <= _PREC_POW)
            right = _wrap(e.right, _prec(e.right) < _PREC_NEG)
            s = f"{left}^{right}"
        else:
            left = _wrap(e.left, _prec(e.left) < p)
            right = _wrap(e.right, _prec(e.right) <= p)
            sep = f" {e.op} " if p == _PREC_ADD else e.op
            s = f"{left}{sep}{right}"
    e._str = s
    return s


def _wrap(e: Expr, paren: bool) -> str:
    s = to_string(e)
    return f"({s})" if paren else s


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", _byte_offset(source, bad))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(source, start)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(source, len(source))))
    return tokens


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind != "op":
            found = text or "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", off)

    def expression(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = _BINARY[op](node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = _BINARY[op](node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "id":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", off)
                self.take()
                arg = self.expression()
                self.expect(")")
                return Func(text, arg)
            if text in FUNCTIONS:
                raise ParseError(f"function {text!r} needs an argument", off)
            if text == "pi":
                return Const(math.pi)
            if text == "i":
                return I
            return Sym(text)
        if (kind, text) == ("op", "("):
            node = self.expression()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {text or 'end of input'!r}", off)


def parse(source: str) -> Expr:
    """Parse the expression grammar into a raw (unsimplified) AST."""
    p = _Parser(source)
    if p.peek()[0] == "end":
        raise ParseError("empty expression", p.peek()[2])
    node = p.expression()
    kind, text, off = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected {text!r}", off)
    return node


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, name: str) -> Expr:
    """Exact partial derivative with respect to the symbol ``name``."""
    memo: dict[int, Expr] = {}

    def d(node: Expr) -> Expr:
        if name not in free_symbols(node):
            return ZERO
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Sym):
            out = ONE
        elif isinstance(node, Neg):
            out = neg(d(node.arg))
        elif isinstance(node, Add):
            out = add(d(node.left), d(node.right))
        elif isinstance(node, Sub):
            out = sub(d(node.left), d(node.right))
        elif isinstance(node, Mul):
            a, b = node.left, node.right
            out = add(mul(d(a), b), mul(a, d(b)))
        elif isinstance(node, Div):
            a, b = node.left, node.right
            out = sub(div(d(a), b), div(mul(a, d(b)), power(b, Const(2))))
        elif isinstance(node, Pow):
            a, b = node.left, node.right
            if name not in free_symbols(b):
                out = mul(mul(b, power(a, sub(b, ONE))), d(a))
            else:
                out = mul(node, add(mul(d(b), func("log", a)), div(mul(b, d(a)), a)))
        elif isinstance(node, Func):
            out = mul(_func_derivative(node.name, node.arg), d(node.arg))
        else:  # pragma: no cover
            raise ExprError(f"cannot differentiate {node!r}")
        memo[key] = out
        return out

    return d(e)


def _func_derivative(name: str, a: Expr) -> Expr:
    if name == "sin":
        return func("cos", a)
    if name == "cos":
        return neg(func("sin", a))
    if name == "tan":
        return div(ONE, power(func("cos", a), Const(2)))
    if name == "exp":
        return func("exp", a)
    if name == "log":
        return div(ONE, a)
    if name == "sinh":
        return func("cosh", a)
    if name == "cosh":
        return func("sinh", a)
    if name == "sqrt":
        return div(ONE, mul(Const(2), func("sqrt", a)))
    raise ExprError(f"unknown function {name!r}")


def diff_multi(e: Expr, names: Iterable[str]) -> Expr:
    for name in names:
        e = diff(e, name)
    return e


# ---------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, env: Mapping[str, complex]) -> complex:
    """Evaluate at a point; ``hbar`` defaults to 1 when not bound."""
    memo: dict[int, complex] = {}

    def ev(node: Expr) -> complex:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Const):
            out = node.value
        elif isinstance(node, Sym):
            if node.name in env:
                out = complex(env[node.name])
            elif node.name == HBAR:
                out = 1.0 + 0j
            else:
                raise UnboundSymbolError(node.name)
        elif isinstance(node, Neg):
            out = -ev(node.arg)
        elif isinstance(node, Func):
            a = ev(node.arg)
            if node.name == "log" and a == 0:
                raise DomainError("log of zero", node)
            try:
                out = _CMATH[node.name](a)
            except (ValueError, OverflowError) as exc:
                raise DomainError(str(exc), node) from exc
        else:
            a, b = ev(node.left), ev(node.right)
            if isinstance(node, Add):
                out = a + b
            elif isinstance(node, Sub):
                out = a - b
            elif isinstance(node, Mul):
                out = a * b
            elif isinstance(node, Div):
                if b == 0:
                    raise DomainError("division by zero", node)
                out = a / b
            else:
                k = _integer(b)
                if a == 0 and (b.real < 0 or (k is None and b.real == 0)):
                    raise DomainError("zero to a non-positive power", node)
                try:
                    out = a**k if k is not None else a**b
                except (ZeroDivisionError, OverflowError) as exc:
                    raise DomainError(str(exc), node) from exc
        memo[key] = out
        return out

    return ev(e)


_NP_FUNCS = {name: f"np.{name}" for name in FUNCTIONS}


def compile_exprs(exprs: Sequence[Expr], argnames: Sequence[str]) -> Callable[..., list[np.ndarray]]:
    """Build a vectorized numpy function ``f(*arrays) -> [values]``.

    Structurally equal subtrees are computed once.  Domain violations produce
    non-finite values rather than exceptions.
    """
    lines: list[str] = []
    names: dict[Expr, str] = {}
    params = [f"a{k}" for k in range(len(argnames))]
    argmap = dict(zip(argnames, params))

    def emit(node: Expr) -> str:
        if node in names:
            return names[node]
        if isinstance(node, Const):
            v = node.value
            code = repr(v.real) if v.imag == 0 else f"complex({v.real!r}, {v.imag!r})"
            return code
        if isinstance(node, Sym):
            if node.name in argmap:
                return argmap[node.name]
            raise UnboundSymbolError(node.name)
        if isinstance(node, Neg):
            code = f"-{emit(node.arg)}"
        elif isinstance(node, Func):
            code = f"{_NP_FUNCS[node.name]}({emit(node.arg)})"
        elif isinstance(node, Pow) and isinstance(node.right, Const) and _integer(node.right.value) is not None:
            code = f"{emit(node.left)}**{_integer(node.right.value)}"
        else:
            op = "**" if node.op == "^" else node.op
            code = f"({emit(node.left)} {op} {emit(node.right)})"
        var = f"t{len(names)}"
        names[node] = var
        lines.append(f"    {var} = {code}")
        return var

    outs = [emit(e) for e in exprs]
    body = "\n".join(lines)
    src = (
        f"def _f({', '.join(params)}):\n"
        f"    shape = np.broadcast_shapes({', '.join(f'np.shape({p})' for p in params)}{',' if len(params) == 1 else ''})\n"
        f"{body}\n"
        f"    return [np.broadcast_to(np.asarray(v, dtype=complex), shape) for v in ({', '.join(outs)}{',' if len(outs) == 1 else ''})]\n"
    )
    namespace = {"np": np}
    exec(compile(src, "<tensorquant.expr>", "exec"), namespace)
    inner = namespace["_f"]

    def f(*arrays):
        arrays = [np.asarray(a, dtype=complex) for a in arrays]
        with np.errstate(all="ignore"):
            return inner(*arrays)

    return f


# ---------------------------------------------------------------------------
# simplification


def _terms(e: Expr, scale: complex, out: dict[Expr, complex]) -> None:
    if isinstance(e, Const):
        out[ONE] = out.get(ONE, 0) + scale * e.value
    elif isinstance(e, Add):
        _terms(e.left, scale, out)
        _terms(e.right, scale, out)
    elif isinstance(e, Sub):
        _terms(e.left, scale, out)
        _terms(e.right, -scale, out)
    elif isinstance(e, Neg):
        _terms(e.arg, -scale, out)
    elif isinstance(e, Mul) and isinstance(e.left, Const):
        _terms(e.right, scale * e.left.value, out)
    else:
        out[e] = out.get(e, 0) + scale


def _factors(e: Expr, exponent: int, out: dict[Expr, int]) -> complex:
    """Accumulate ``e**exponent`` into base -> integer exponent; return the constant part."""
    if isinstance(e, Const):
        return e.value**exponent
    if isinstance(e, Mul):
        return _factors(e.left, exponent, out) * _factors(e.right, exponent, out)
    if isinstance(e, Div):
        return _factors(e.left, exponent, out) * _factors(e.right, -exponent, out)
    if isinstance(e, Neg):
        return (-1) ** exponent * _factors(e.arg, exponent, out)
    if isinstance(e, Pow) and isinstance(e.right, Const):
        k = _integer(e.right.value)
        if k is not None:
            return _factors(e.left, exponent * k, out)
    out[e] = out.get(e, 0) + exponent
    return 1


def _sort_key(e: Expr) -> str:
    return to_string(e)


def _collect_sum(e: Expr) -> Expr:
    acc: dict[Expr, complex] = {}
    _terms(e, 1, acc)
    const = acc.pop(ONE, 0)
    items = sorted(((t, c) for t, c in acc.items() if c != 0), key=lambda tc: _sort_key(tc[0]))
    result: Expr | None = None
    for term, c in items:
        if result is None:
            result = mul(Const(c), term)
        elif c.imag == 0 and c.real < 0:
            result = sub(result, mul(Const(-c), term))
        else:
            result = add(result, mul(Const(c), term))
    if result is None:
        return Const(const)
    return add(result, Const(const)) if const != 0 else result


def _collect_product(e: Expr) -> Expr:
    acc: dict[Expr, int] = {}
    const = _factors(e, 1, acc)
    if const == 0:
        return ZERO
    num = sorted(((b, k) for b, k in acc.items() if k > 0), key=lambda bk: _sort_key(bk[0]))
    den = sorted(((b, -k) for b, k in acc.items() if k < 0), key=lambda bk: _sort_key(bk[0]))
    top: Expr = ONE
    for b, k in num:
        top = mul(top, power(b, Const(k)))
    bottom: Expr = ONE
    for b, k in den:
        bottom = mul(bottom, power(b, Const(k)))
    return mul(Const(const), div(top, bottom))


def simplify(e: Expr) -> Expr:
    """Constant folding, 0/1 absorption, and flattening of sums and products.

    Like terms and like factors (with integer exponents) are merged.  The result
    is semantically equal to ``e`` but not a canonical form.
    """
    memo: dict[int, Expr] = {}

    def go(node: Expr) -> Expr:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Const, Sym)):
            out = node
        else:
            out = _rebuild(node, [go(c) for c in node.children])
            if isinstance(out, (Mul, Div)) or (isinstance(out, Pow) and isinstance(out.right, Const)):
                out = _collect_product(out)
            if isinstance(out, (Add, Sub, Neg)) or (isinstance(out, Mul) and isinstance(out.left, Const)):
                out = _collect_sum(out)
        memo[key] = out
        return out

    return go(e)


# ---------------------------------------------------------------------------
# randomized semantic equality


@dataclass(frozen=True)
class EquivConfig:
    """Sampling settings for :func:`equiv`."""

    n: int = 20
    tol: float = 1e-9
    seed: int = DEFAULT_SEED
    hbar: float = 1.0
    retries: int = 20
    fixed: Mapping[str, complex] = field(default_factory=dict)

    def bindings(self) -> dict[str, complex]:
        out = {HBAR: self.hbar}
        out.update(self.fixed)
        return out

    def replace(self, **changes) -> "EquivConfig":
        from dataclasses import replace

        return replace(self, **changes)


DEFAULT_EQUIV = EquivConfig()

Box = Mapping[str, tuple[float, float]]


def sample_values(
    exprs: Sequence[Expr], box: Box, cfg: EquivConfig = DEFAULT_EQUIV
) -> tuple[dict[str, np.ndarray], list[np.ndarray]]:
    """Evaluate ``exprs`` at ``cfg.n`` random points of ``box``.

    Points where any expression is non-finite are re-drawn, up to ``cfg.retries``
    rounds.
    """
    if cfg.n < 1:
        raise ValueError("need at least one sample point")
    fixed = cfg.bindings()
    free = frozenset().union(*(free_symbols(e) for e in exprs))
    unbound = sorted(s for s in free if s not in box and s not in fixed)
    if unbound:
        raise UnboundSymbolError(unbound[0])
    names = sorted(s for s in free if s in box)
    consts = sorted(s for s in free if s not in box)
    fn = compile_exprs(exprs, names + consts)
    fixed_args = [complex(fixed[s]) for s in consts]
    rng = np.random.default_rng(cfg.seed)

    def draw(m: int) -> dict[str, np.ndarray]:
        return {s: rng.uniform(box[s][0], box[s][1], size=m) for s in names}

    def run(pts: dict[str, np.ndarray], m: int) -> list[np.ndarray]:
        out = fn(*[pts[s] for s in names], *fixed_args)
        return [np.array(np.broadcast_to(v, (m,))) for v in out]

    points = draw(cfg.n)
    values = run(points, cfg.n)
    for _ in range(cfg.retries + 1):
        bad = np.zeros(cfg.n, dtype=bool)
        for v in values:
            bad |= ~np.isfinite(v)
        if not bad.any():
            return points, values
        if not names:
            break
        idx = np.flatnonzero(bad)
        fresh = draw(len(idx))
        for s in names:
            points[s][idx] = fresh[s]
        for v, r in zip(values, run(fresh, len(idx))):
            v[idx] = r
    raise EquivError("could not find sample points where all expressions are defined")


def discrepancy(a: Expr, b: Expr, box: Box, cfg: EquivConfig = DEFAULT_EQUIV) -> float:
    """Largest scaled difference ``|a-b| / (1 + max(|a|,|b|))`` over the sample."""
    _, (va, vb) = sample_values([a, b], box, cfg)
    scale = 1.0 + np.maximum(np.abs(va), np.abs(vb))
    return float(np.max(np.abs(va - vb) / scale))


def equiv(a: Expr, b: Expr, box: Box, n: int | None = None, tol: float | None = None,
          cfg: EquivConfig = DEFAULT_EQUIV) -> bool:
    """True iff ``|a-b| <= tol*(1+max(|a|,|b|))`` at every sampled point."""
    if n is not None:
        cfg = cfg.replace(n=n)
    if tol is not None:
        cfg = cfg.replace(tol=tol)
    return discrepancy(a, b, box, cfg) <= cfg.tol


def is_zero(e: Expr, box: Box, cfg: EquivConfig = DEFAULT_EQUIV) -> bool:
    if isinstance(e, Const):
        return e.value == 0
    return equiv(e, ZERO, box, cfg=cfg)


def finite_difference(e: Expr, name: str, step: float = 1e-5) -> Callable[[Mapping[str, complex]], complex]:
    """Central difference of ``e`` in ``name`` as a pointwise callable (test oracle)."""

    def fd(env: Mapping[str, complex]) -> complex:
        hi = dict(env)
        lo = dict(env)
        hi[name] = env[name] + step
        lo[name] = env[name] - step
        return (evaluate(e, hi) - evaluate(e, lo)) / (2 * step)

    return fd
