"""Scalar expressions over coordinates.

Expressions are immutable, hash-consed trees: structurally identical nodes are
the same object, so equality and hashing are identity based and derivative
caches stay small.  Grammar (EBNF)::

    expression := term { ("+" | "-") term }
    term       := unary { ("*" | "/") unary }
    unary      := ("-" | "+") unary | power
    power      := primary [ "^" exponent ]
    exponent   := [ "-" ] INTEGER | "(" [ "-" ] INTEGER ")"
    primary    := NUMBER | IDENT | FUNC "(" expression ")" | "(" expression ")"
    FUNC       := "sin" | "cos" | "exp"

``^`` binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.  Exponents are
integers only.
"""

from __future__ import annotations

import math
import re
import threading
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

DIV_EPS = 1e-300

_FUNCS = ("sin", "cos", "exp")


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class EvaluationError(ArithmeticError):
    pass


class Expr:
    """A node of the expression DAG.  Build nodes with the module factories."""

    __slots__ = ("op", "args", "value", "_key", "__weakref__")

    op: str
    args: tuple
    value: float | int | None

    def __repr__(self) -> str:
        return f"Expr({to_string(self)})"

    def __str__(self) -> str:
        return to_string(self)

    # arithmetic sugar; all routes go through the simplifying constructors
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

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer exponents are supported")
        return power(self, int(k))

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def is_zero(self) -> bool:
        return self.op == "const" and self.value == 0.0

    def is_one(self) -> bool:
        return self.op == "const" and self.value == 1.0


_table: dict[tuple, Expr] = {}
_table_lock = threading.Lock()


def _intern(op: str, args: tuple = (), value=None) -> Expr:
    key = (op, value, tuple(id(a) for a in args))
    node = _table.get(key)
    if node is not None:
        return node
    with _table_lock:
        node = _table.get(key)
        if node is None:
            node = object.__new__(Expr)
            node.op = op
            node.args = args
            node.value = value
            node._key = key
            _table[key] = node
    return node


def const(v: float) -> Expr:
    v = float(v)
    if v == 0.0:
        v = 0.0  # fold -0.0
    return _intern("const", (), v)


ZERO = const(0.0)
ONE = const(1.0)


def coord(i: int) -> Expr:
    if i < 0:
        raise ValueError("coordinate index must be non-negative")
    return _intern("coord", (), int(i))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)):
        return const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if b.op == "neg":
        return sub(a, b.args[0])
    return _intern("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if b.is_zero():
        return a
    if a.is_zero():
        return neg(b)
    if a is b:
        return ZERO
    if b.op == "neg":
        return add(a, b.args[0])
    return _intern("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if a.is_zero() or b.is_zero():
        return ZERO
    if a.is_one():
        return b
    if b.is_one():
        return a
    if a.is_const and a.value == -1.0:
        return neg(b)
    if b.is_const and b.value == -1.0:
        return neg(a)
    return _intern("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b.is_const:
        if abs(b.value) < DIV_EPS:
            raise EvaluationError("division by a constant zero")
        if a.is_const:
            return const(a.value / b.value)
        if b.is_one():
            return a
    if a.is_zero():
        return ZERO
    if a is b:
        return ONE
    return _intern("div", (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return _intern("neg", (a,))


def power(a: Expr, k: int) -> Expr:
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return a
    if a.is_const:
        if k < 0 and abs(a.value) < DIV_EPS:
            raise EvaluationError("division by a constant zero")
        return const(a.value**k)
    return _intern("pow", (a,), k)


def sin(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_const:
        return const(math.sin(a.value))
    return _intern("sin", (a,))


def cos(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_const:
        return const(math.cos(a.value))
    return _intern("cos", (a,))


def exp(a: Expr) -> Expr:
    a = as_expr(a)
    if a.is_const:
        return const(math.exp(a.value))
    return _intern("exp", (a,))


_UNARY = {"sin": sin, "cos": cos, "exp": exp}


def total(terms: Iterable[Expr]) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def max_coord(e: Expr) -> int:
    """Largest coordinate index referenced by ``e`` (-1 for constants)."""
    best = -1
    for node in _postorder([e]):
        if node.op == "coord":
            best = max(best, node.value)
    return best


def _postorder(roots: Sequence[Expr]) -> list[Expr]:
    seen: set[int] = set()
    order: list[Expr] = []
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in reversed(node.args):
            if id(child) not in seen:
                stack.append((child, False))
    return order


def evaluate(e: Expr, p: Sequence[float]) -> float:
    """Evaluate ``e`` at point ``p`` by walking the DAG."""
    need = max_coord(e)
    if len(p) <= need:
        raise ValueError(f"point has {len(p)} coordinates, expression needs {need + 1}")
    vals: dict[int, float] = {}
    for node in _postorder([e]):
        vals[id(node)] = _apply(node, [vals[id(c)] for c in node.args], p)
    return vals[id(e)]


def _apply(node: Expr, a: list, p) -> float:
    op = node.op
    if op == "const":
        return node.value
    if op == "coord":
        return float(p[node.value])
    if op == "add":
        return a[0] + a[1]
    if op == "sub":
        return a[0] - a[1]
    if op == "mul":
        return a[0] * a[1]
    if op == "div":
        return _checked_div(a[0], a[1])
    if op == "neg":
        return -a[0]
    if op == "pow":
        return _checked_pow(a[0], node.value)
    if op == "sin":
        return math.sin(a[0])
    if op == "cos":
        return math.cos(a[0])
    if op == "exp":
        return math.exp(a[0])
    raise AssertionError(op)


def _checked_div(a: float, b: float) -> float:
    if abs(b) < DIV_EPS:
        raise EvaluationError(f"division by near-zero value {b!r}")
    return a / b


def _checked_pow(a: float, k: int) -> float:
    if k < 0:
        return _checked_div(1.0, a ** (-k))
    return a**k


@lru_cache(maxsize=None)
def differentiate(e: Expr, i: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to coordinate ``i``."""
    op = e.op
    if op == "const":
        return ZERO
    if op == "coord":
        return ONE if e.value == i else ZERO
    if op in ("add", "sub"):
        da, db = differentiate(e.args[0], i), differentiate(e.args[1], i)
        return add(da, db) if op == "add" else sub(da, db)
    if op == "mul":
        a, b = e.args
        return add(mul(differentiate(a, i), b), mul(a, differentiate(b, i)))
    if op == "div":
        a, b = e.args
        da, db = differentiate(a, i), differentiate(b, i)
        if db.is_zero():
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    if op == "neg":
        return neg(differentiate(e.args[0], i))
    if op == "pow":
        a, = e.args
        k = e.value
        return mul(mul(const(k), power(a, k - 1)), differentiate(a, i))
    if op == "sin":
        a, = e.args
        return mul(cos(a), differentiate(a, i))
    if op == "cos":
        a, = e.args
        return neg(mul(sin(a), differentiate(a, i)))
    if op == "exp":
        a, = e.args
        return mul(e, differentiate(a, i))
    raise AssertionError(op)


def gradient(e: Expr, n: int) -> tuple[Expr, ...]:
    return tuple(differentiate(e, i) for i in range(n))


def substitute(e: Expr, mapping: Sequence[Expr]) -> Expr:
    """Replace ``coord(i)`` by ``mapping[i]`` throughout ``e``."""
    vals: dict[int, Expr] = {}
    for node in _postorder([e]):
        op = node.op
        ch = [vals[id(c)] for c in node.args]
        if op == "const":
            out = node
        elif op == "coord":
            out = mapping[node.value]
        elif op == "add":
            out = add(*ch)
        elif op == "sub":
            out = sub(*ch)
        elif op == "mul":
            out = mul(*ch)
        elif op == "div":
            out = div(*ch)
        elif op == "neg":
            out = neg(ch[0])
        elif op == "pow":
            out = power(ch[0], node.value)
        else:
            out = _UNARY[op](ch[0])
        vals[id(node)] = out
    return vals[id(e)]


def node_count(exprs: Iterable[Expr]) -> int:
    return len(_postorder(list(exprs)))


# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expr, names: Sequence[str] | None = None) -> str:
    """Render ``e`` in the parser's grammar (parse(to_string(e)) reproduces e's values)."""

    def name(i: int) -> str:
        return names[i] if names is not None else f"x{i}"

    memo: dict[int, tuple[str, int]] = {}
    for node in _postorder([e]):
        op = node.op
        if op == "const":
            s = _fmt_number(node.value)
            memo[id(node)] = (f"({s})", 5) if node.value < 0 else (s, 5)
        elif op == "coord":
            memo[id(node)] = (name(node.value), 5)
        elif op in ("add", "sub", "mul", "div"):
            p = _PREC[op]
            (ls, lp), (rs, rp) = memo[id(node.args[0])], memo[id(node.args[1])]
            if lp < p:
                ls = f"({ls})"
            # left associative: the right operand needs parentheses at equal precedence
            if rp <= p:
                rs = f"({rs})"
            sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[op]
            memo[id(node)] = (f"{ls} {sym} {rs}", p)
        elif op == "neg":
            s, sp = memo[id(node.args[0])]
            if sp < 4:
                s = f"({s})"
            memo[id(node)] = (f"-{s}", 3)
        elif op == "pow":
            s, sp = memo[id(node.args[0])]
            if sp < 5:
                s = f"({s})"
            k = node.value
            memo[id(node)] = (f"{s}^{k}" if k >= 0 else f"{s}^({k})", 4)
        else:
            s, _ = memo[id(node.args[0])]
            memo[id(node)] = (f"{op}({s})", 5)
    return memo[id(e)][0]


# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = {n: i for i, n in enumerate(names)}
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                rest = text[pos:]
                if rest.strip() == "":
                    break
                bad = pos + (len(rest) - len(rest.lstrip()))
                raise ExpressionSyntaxError(
                    f"unexpected character {text[bad]!r}", self._byte(bad), ("number", "identifier", "operator")
                )
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.end = len(text)
        self.i = 0

    def _byte(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def fail(self, expected: Iterable[str]):
        kind, val, pos = self.peek()
        what = "end of input" if kind == "eof" else f"token {val!r}"
        raise ExpressionSyntaxError(f"unexpected {what}", self._byte(pos), expected)

    def expect_op(self, sym: str):
        kind, val, _ = self.peek()
        if kind != "op" or val != sym:
            self.fail({sym})
        self.take()

    def parse(self) -> Expr:
        e = self.expression()
        if self.peek()[0] != "eof":
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return e

    def expression(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                e = add(e, rhs) if val == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if val == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return power(base, self.exponent())
        return base

    def exponent(self) -> int:
        kind, val, _ = self.peek()
        if kind == "op" and val == "(":
            self.take()
            k = self._signed_int()
            self.expect_op(")")
            return k
        return self._signed_int()

    def _signed_int(self) -> int:
        sign = 1
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            sign = -1
        kind, val, pos = self.peek()
        if kind != "num" or not val.isdigit():
            self.fail({"integer"})
        self.take()
        return sign * int(val)

    def primary(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return const(float(val))
        if kind == "ident":
            self.take()
            if val in _FUNCS:
                self.expect_op("(")
                arg = self.expression()
                self.expect_op(")")
                return _UNARY[val](arg)
            if val not in self.names:
                raise UnknownIdentifierError(val, self._byte(pos))
            return coord(self.names[val])
        if kind == "op" and val == "(":
            self.take()
            e = self.expression()
            self.expect_op(")")
            return e
        self.fail({"number", "identifier", "(", "-", "+"} | set(_FUNCS))


def parse_expression(text: str, coord_names: Sequence[str]) -> Expr:
    """Parse ``text`` into an expression whose coordinate indices follow ``coord_names``."""
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    reserved = set(coord_names) & set(_FUNCS)
    if reserved:
        raise ExpressionError(f"coordinate names shadow functions: {sorted(reserved)}")
    return _Parser(text, coord_names).parse()


def parse_value(value, coord_names: Sequence[str]) -> Expr:
    """Accept either an expression string or a plain JSON number."""
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, float)):
        return const(value)
    return parse_expression(value, coord_names)


# compilation to fast evaluators


class _Compiled:
    """Evaluate a fixed list of expressions at points, sharing common subexpressions.

    ``__call__`` takes one point and returns a float64 vector; ``batch`` takes an
    ``(m, n)`` array of points and returns ``(m, len(exprs))``.
    """

    def __init__(self, exprs: Sequence[Expr]):
        self.exprs = tuple(exprs)
        self.n_required = max((max_coord(e) for e in self.exprs), default=-1) + 1
        self._scalar = _build(self.exprs, vector=False)
        self._vector = None
        self._lenient = None

    def __call__(self, p) -> np.ndarray:
        if len(p) < self.n_required:
            raise ValueError(f"point has {len(p)} coordinates, expressions need {self.n_required}")
        return np.array(self._scalar(p), dtype=float)

    def batch(self, points, strict: bool = True) -> np.ndarray:
        """Evaluate at each row of ``points``; non-strict mode turns near-zero divisions into NaN rows."""
        pts = np.asarray(points, dtype=float)
        if strict:
            if self._vector is None:
                self._vector = _build(self.exprs, vector=True)
            fn = self._vector
        else:
            if self._lenient is None:
                self._lenient = _build(self.exprs, vector=True, lenient=True)
            fn = self._lenient
        cols = fn(pts.T)
        m = pts.shape[0]
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), (m,)) for c in cols], axis=1) if cols else np.zeros((m, 0))


def _sdiv(a, b):
    if abs(b) < DIV_EPS:
        raise EvaluationError(f"division by near-zero value {b!r}")
    return a / b


def _vdiv(a, b):
    if np.any(np.abs(b) < DIV_EPS):
        raise EvaluationError("division by near-zero value")
    return a / b


def _ldiv(a, b):
    b = np.asarray(b, dtype=float)
    with np.errstate(all="ignore"):
        return np.where(np.abs(b) < DIV_EPS, np.nan, a / np.where(b == 0.0, 1.0, b))


def _build(exprs: Sequence[Expr], vector: bool, lenient: bool = False):
    order = _postorder(list(exprs))
    names: dict[int, str] = {}
    lines = ["def _f(p):"]
    for k, node in enumerate(order):
        op = node.op
        if op == "const":
            names[id(node)] = repr(node.value)
            continue
        a = [names[id(c)] for c in node.args]
        if op == "coord":
            src = f"p[{node.value}]"
        elif op == "add":
            src = f"{a[0]} + {a[1]}"
        elif op == "sub":
            src = f"{a[0]} - {a[1]}"
        elif op == "mul":
            src = f"{a[0]} * {a[1]}"
        elif op == "div":
            src = f"_div({a[0]}, {a[1]})"
        elif op == "neg":
            src = f"-{a[0]}"
        elif op == "pow":
            kk = node.value
            src = f"{a[0]} ** {kk}" if kk > 0 else f"_div(1.0, {a[0]} ** {-kk})"
        else:
            src = f"_{op}({a[0]})"
        var = f"v{k}"
        lines.append(f"    {var} = {src}")
        names[id(node)] = var
    lines.append("    return (" + "".join(f"{names[id(e)]}, " for e in exprs) + ")")
    env = {
        "_div": (_ldiv if lenient else _vdiv) if vector else _sdiv,
        "_sin": np.sin if vector else math.sin,
        "_cos": np.cos if vector else math.cos,
        "_exp": np.exp if vector else math.exp,
    }
    exec(compile("\n".join(lines), "<transaffine-expr>", "exec"), env)
    return env["_f"]


def compile_exprs(exprs: Sequence[Expr]) -> _Compiled:
    return _Compiled(exprs)
