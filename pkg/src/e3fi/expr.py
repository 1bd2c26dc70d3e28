"""Complex-valued expression trees over the phase-space symbols.

Nodes are immutable and hash-consed: building the same tree twice yields the
same object, so structural equality is identity and shared subtrees are shared
in memory. All construction goes through the smart constructors below, which
apply the only simplifications this module performs: constant folding, the
0/1 identities and merging of nested powers.

The canonical symbols are ``t, x, y, z, vx, vy, vz``. Any other identifier must
be declared as a parameter or a user function when parsing.
"""

from __future__ import annotations

import cmath
import math
import weakref
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

COORDS = ("t", "x", "y", "z", "vx", "vy", "vz")
POSITIONS = ("x", "y", "z")
VELOCITIES = ("vx", "vy", "vz")

# name -> arity
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "atan": 1, "atan2": 2}


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class SingularEvaluation(ExprError):
    pass


_interned: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """Base node. Use the module-level constructors rather than the classes."""

    __slots__ = ("__weakref__",)
    kind = "expr"

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

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
        if isinstance(other, Expr):
            if not isinstance(other, Const):
                raise ExprError("exponent must be a rational constant")
            other = other.value
        return power(self, _to_fraction(other))

    def __neg__(self):
        return neg(self)

    def __pos__(self):
        return self

    def __str__(self) -> str:
        return to_string(self)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {to_string(self)}>"

    def __reduce__(self):
        return (parse_canonical, (to_string(self), sorted(parameters(self))))


def _intern(cls, key: tuple, **fields) -> Expr:
    full = (cls,) + key
    node = _interned.get(full)
    if node is None:
        node = object.__new__(cls)
        for name, value in fields.items():
            object.__setattr__(node, name, value)
        _interned[full] = node
    return node


class _Frozen(Expr):
    __slots__ = ()

    def __setattr__(self, name, value):
        raise AttributeError("expression nodes are immutable")


class Const(_Frozen):
    __slots__ = ("value",)
    kind = "const"
    value: complex


class Var(_Frozen):
    __slots__ = ("name",)
    kind = "var"
    name: str


class Param(_Frozen):
    __slots__ = ("name",)
    kind = "param"
    name: str


class Add(_Frozen):
    __slots__ = ("left", "right")
    kind = "add"
    left: Expr
    right: Expr

    @property
    def children(self):
        return (self.left, self.right)


class Mul(_Frozen):
    __slots__ = ("left", "right")
    kind = "mul"
    left: Expr
    right: Expr

    @property
    def children(self):
        return (self.left, self.right)


class Div(_Frozen):
    __slots__ = ("num", "den")
    kind = "div"
    num: Expr
    den: Expr

    @property
    def children(self):
        return (self.num, self.den)


class Pow(_Frozen):
    __slots__ = ("base", "exp")
    kind = "pow"
    base: Expr
    exp: Fraction

    @property
    def children(self):
        return (self.base,)


class Func(_Frozen):
    __slots__ = ("name", "args")
    kind = "func"
    name: str
    args: tuple

    @property
    def children(self):
        return self.args


# ---------------------------------------------------------------- constructors


def const(value) -> Const:
    value = complex(value)
    return _intern(Const, (value,), value=value)


def var(name: str) -> Var:
    if name not in COORDS:
        raise ExprError(f"{name!r} is not a phase-space symbol")
    return _intern(Var, (name,), name=name)


def param(name: str) -> Param:
    if name in COORDS or name in FUNCTIONS or name in MACROS or name == "i":
        raise ExprError(f"{name!r} is reserved")
    return _intern(Param, (name,), name=name)


ZERO = const(0)
ONE = const(1)
MINUS_ONE = const(-1)
I = const(1j)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, complex, Fraction)):
        return const(complex(value))
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


def _is_const(e: Expr, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value + b.value)
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    return _intern(Add, (a, b), left=a, right=b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value * b.value)
    if _is_const(a, 0) or _is_const(b, 0):
        return ZERO
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    return _intern(Mul, (a, b), left=a, right=b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1):
        return a
    if isinstance(b, Const) and b.value == 0:
        return _intern(Div, (a, b), num=a, den=b)
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value / b.value)
    if _is_const(a, 0):
        return ZERO
    return _intern(Div, (a, b), num=a, den=b)


def neg(a: Expr) -> Expr:
    return mul(MINUS_ONE, a)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def power(base: Expr, exponent) -> Expr:
    q = _to_fraction(exponent)
    if q == 0:
        return ONE
    if q == 1:
        return base
    if isinstance(base, Const):
        try:
            return const(_cpow(base.value, q))
        except (ZeroDivisionError, ValueError, OverflowError):
            pass
    elif isinstance(base, Pow) and q.denominator == 1:
        # (b^p)^n == b^(p n) on the principal branch whenever n is an integer
        return power(base.base, base.exp * q)
    return _intern(Pow, (base, q), base=base, exp=q)


def func(name: str, *args: Expr) -> Expr:
    if FUNCTIONS.get(name) != len(args):
        raise ExprError(f"{name} takes {FUNCTIONS.get(name)} argument(s)")
    args = tuple(as_expr(a) for a in args)
    if all(isinstance(a, Const) for a in args):
        try:
            return const(_SCALAR_FUNCS[name](*(a.value for a in args)))
        except (ZeroDivisionError, ValueError, OverflowError):
            pass
    return _intern(Func, (name, args), name=name, args=args)


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def log(a) -> Expr:
    return func("log", as_expr(a))


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def atan(a) -> Expr:
    return func("atan", as_expr(a))


def atan2(a, b) -> Expr:
    return func("atan2", as_expr(a), as_expr(b))


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, complex):
        if value.imag != 0:
            raise ExprError("exponent must be real")
        value = value.real
    f = Fraction(value).limit_denominator(1000)
    if abs(float(f) - value) > 1e-12 * max(1.0, abs(value)):
        raise ExprError(f"exponent {value} is not a simple rational")
    return f


# ---------------------------------------------------------------- numerics


def _cpow(x: complex, q: Fraction) -> complex:
    """Principal-branch x**q for rational q."""
    x = complex(x)
    if q.denominator == 1:
        return x ** int(q)
    if q.denominator == 2:
        return cmath.sqrt(x) ** int(q.numerator)
    if x == 0:
        if q > 0:
            return 0j
        raise ZeroDivisionError("0 to a negative power")
    return cmath.exp(float(q) * cmath.log(x))


def _atan2c(y: complex, x: complex) -> complex:
    y = complex(y)
    x = complex(x)
    if y.imag == 0 and x.imag == 0:
        return complex(math.atan2(y.real, x.real))
    return -1j * cmath.log((x + 1j * y) / cmath.sqrt(x * x + y * y))


_SCALAR_FUNCS: dict[str, Callable] = {
    "sin": cmath.sin,
    "cos": cmath.cos,
    "exp": cmath.exp,
    "log": cmath.log,
    "sqrt": cmath.sqrt,
    "atan": cmath.atan,
    "atan2": _atan2c,
}


# ---------------------------------------------------------------- traversal


def topological(roots: Iterable[Expr]) -> list[Expr]:
    """Unique nodes reachable from ``roots``, children before parents."""
    seen: set[int] = set()
    order: list[Expr] = []
    stack: list[tuple[Expr, bool]] = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in reversed(node.children):
            if id(child) not in seen:
                stack.append((child, False))
    return order


def variables(e: Expr) -> set[str]:
    return {n.name for n in topological([e]) if isinstance(n, Var)}


def parameters(e: Expr) -> set[str]:
    return {n.name for n in topological([e]) if isinstance(n, Param)}


def size(e: Expr) -> int:
    return len(topological([e]))


def rebuild(node: Expr, children: Sequence[Expr]) -> Expr:
    """Rebuild ``node`` with new children through the smart constructors."""
    if isinstance(node, Add):
        return add(*children)
    if isinstance(node, Mul):
        return mul(*children)
    if isinstance(node, Div):
        return div(*children)
    if isinstance(node, Pow):
        return power(children[0], node.exp)
    if isinstance(node, Func):
        return func(node.name, *children)
    return node


def _map_bottom_up(roots: Sequence[Expr], leaf: Callable[[Expr], Expr]) -> list[Expr]:
    out: dict[int, Expr] = {}
    for node in topological(roots):
        if node.children:
            out[id(node)] = rebuild(node, [out[id(c)] for c in node.children])
        else:
            out[id(node)] = leaf(node)
    return [out[id(r)] for r in roots]


def substitute(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Replace variables or parameters by name with expressions or numbers."""
    repl = {k: as_expr(v) for k, v in mapping.items()}

    def leaf(node: Expr) -> Expr:
        if isinstance(node, (Var, Param)) and node.name in repl:
            return repl[node.name]
        return node

    return _map_bottom_up([e], leaf)[0]


def simplify(e: Expr) -> Expr:
    return _map_bottom_up([e], lambda n: n)[0]


# ---------------------------------------------------------------- calculus


def diff(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative with respect to a canonical symbol."""
    if name not in COORDS:
        raise ExprError(f"cannot differentiate with respect to {name!r}")
    d: dict[int, Expr] = {}
    for node in topological([e]):
        if isinstance(node, Var):
            d[id(node)] = ONE if node.name == name else ZERO
        elif isinstance(node, (Const, Param)):
            d[id(node)] = ZERO
        elif isinstance(node, Add):
            d[id(node)] = add(d[id(node.left)], d[id(node.right)])
        elif isinstance(node, Mul):
            a, b = node.left, node.right
            d[id(node)] = add(mul(d[id(a)], b), mul(a, d[id(b)]))
        elif isinstance(node, Div):
            a, b = node.num, node.den
            da, db = d[id(a)], d[id(b)]
            d[id(node)] = sub(div(da, b), div(mul(a, db), power(b, 2)))
        elif isinstance(node, Pow):
            db = d[id(node.base)]
            q = node.exp
            d[id(node)] = mul(mul(const(q.numerator / q.denominator), power(node.base, q - 1)), db)
        elif isinstance(node, Func):
            d[id(node)] = _diff_func(node, [d[id(a)] for a in node.args])
        else:  # pragma: no cover
            raise ExprError(f"unknown node {node!r}")
    return d[id(e)]


def _diff_func(node: Func, dargs: list[Expr]) -> Expr:
    u = node.args[0]
    du = dargs[0]
    name = node.name
    if name == "atan2":
        y, x = node.args
        dy, dx = dargs
        return div(sub(mul(x, dy), mul(y, dx)), add(power(x, 2), power(y, 2)))
    if _is_const(du, 0):
        return ZERO
    if name == "sin":
        outer = cos(u)
    elif name == "cos":
        outer = neg(sin(u))
    elif name == "exp":
        outer = node
    elif name == "log":
        return div(du, u)
    elif name == "sqrt":
        return div(du, mul(const(2), node))
    elif name == "atan":
        return div(du, add(ONE, power(u, 2)))
    else:  # pragma: no cover
        raise ExprError(f"no derivative rule for {name}")
    return mul(outer, du)


def gradient(e: Expr, names: Sequence[str] = POSITIONS) -> list[Expr]:
    return [diff(e, n) for n in names]


# ---------------------------------------------------------------- evaluation


def evaluate(e: Expr, binding: Mapping[str, complex]) -> complex:
    """Evaluate at one point. ``binding`` maps symbol and parameter names to values."""
    vals: dict[int, complex] = {}
    try:
        for node in topological([e]):
            if isinstance(node, Const):
                v = node.value
            elif isinstance(node, (Var, Param)):
                try:
                    v = complex(binding[node.name])
                except KeyError:
                    raise ExprError(f"no value bound for {node.name!r}") from None
            elif isinstance(node, Add):
                v = vals[id(node.left)] + vals[id(node.right)]
            elif isinstance(node, Mul):
                v = vals[id(node.left)] * vals[id(node.right)]
            elif isinstance(node, Div):
                v = vals[id(node.num)] / vals[id(node.den)]
            elif isinstance(node, Pow):
                v = _cpow(vals[id(node.base)], node.exp)
            else:
                v = _SCALAR_FUNCS[node.name](*(vals[id(a)] for a in node.args))
            vals[id(node)] = v
    except (ZeroDivisionError, ValueError) as exc:
        raise SingularEvaluation(str(exc)) from None
    return vals[id(e)]


def singular_factors(e: Expr) -> list[Expr]:
    """Subexpressions whose vanishing makes ``e`` singular or non-smooth.

    Denominators, bases of negative powers, and arguments of log, sqrt and
    fractional powers (branch points).
    """
    out: list[Expr] = []
    seen: set[int] = set()

    def push(x: Expr) -> None:
        if not isinstance(x, Const) and id(x) not in seen:
            seen.add(id(x))
            out.append(x)

    for node in topological([e]):
        if isinstance(node, Div):
            push(node.den)
        elif isinstance(node, Pow) and (node.exp < 0 or node.exp.denominator != 1):
            push(node.base)
        elif isinstance(node, Func) and node.name in ("log", "sqrt"):
            push(node.args[0])
        elif isinstance(node, Func) and node.name == "atan2":
            push(add(power(node.args[0], 2), power(node.args[1], 2)))
        elif isinstance(node, Func) and node.name == "atan":
            push(add(ONE, power(node.args[0], 2)))
    return out


# ---------------------------------------------------------------- printing

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_real(x: float) -> str:
    s = repr(float(x))
    if s in ("inf", "-inf", "nan"):
        raise ExprError(f"cannot print non-finite constant {s}")
    return s


def _fmt_const(c: complex) -> tuple[str, int]:
    re, im = c.real, c.imag
    if im == 0:
        if re < 0:
            return f"({_fmt_real(re)})", _PREC_ATOM
        return _fmt_real(re), _PREC_ATOM
    if im < 0:
        ims = f"({_fmt_real(im)})*i"
    else:
        ims = f"{_fmt_real(im)}*i"
    if re == 0:
        return f"({ims})", _PREC_ATOM
    res = f"({_fmt_real(re)})" if re < 0 else _fmt_real(re)
    return f"({res} + {ims})", _PREC_ATOM


def _fmt_exp(q: Fraction) -> str:
    if q.denominator == 1 and q > 0:
        return str(q.numerator)
    return f"({q.numerator}/{q.denominator})" if q.denominator != 1 else f"({q.numerator})"


def to_string(e: Expr) -> str:
    """Render in the parser's grammar; ``parse(to_string(e))`` rebuilds ``e``."""
    memo: dict[int, tuple[str, int]] = {}

    def wrap(node: Expr, min_prec: int) -> str:
        s, p = memo[id(node)]
        return s if p >= min_prec else f"({s})"

    for node in topological([e]):
        if isinstance(node, Const):
            memo[id(node)] = _fmt_const(node.value)
        elif isinstance(node, (Var, Param)):
            memo[id(node)] = (node.name, _PREC_ATOM)
        elif isinstance(node, Add):
            r = node.right
            if isinstance(r, Mul) and r.left is MINUS_ONE:
                memo[id(node)] = (f"{wrap(node.left, _PREC_ADD)} - {wrap(r.right, _PREC_MUL)}", _PREC_ADD)
            else:
                memo[id(node)] = (f"{wrap(node.left, _PREC_ADD)} + {wrap(r, _PREC_MUL)}", _PREC_ADD)
        elif isinstance(node, Mul):
            if node.left is MINUS_ONE:
                memo[id(node)] = (f"-{wrap(node.right, _PREC_POW)}", _PREC_UNARY)
            else:
                memo[id(node)] = (f"{wrap(node.left, _PREC_MUL)}*{wrap(node.right, _PREC_UNARY)}", _PREC_MUL)
        elif isinstance(node, Div):
            memo[id(node)] = (f"{wrap(node.num, _PREC_MUL)}/{wrap(node.den, _PREC_UNARY)}", _PREC_MUL)
        elif isinstance(node, Pow):
            memo[id(node)] = (f"{wrap(node.base, _PREC_ATOM)}^{_fmt_exp(node.exp)}", _PREC_POW)
        elif isinstance(node, Func):
            memo[id(node)] = (f"{node.name}({', '.join(wrap(a, _PREC_ADD) for a in node.args)})", _PREC_ATOM)
    return memo[id(e)][0]


# ---------------------------------------------------------------- parsing


def _macro_table() -> dict[str, Expr]:
    x, y, z = var("x"), var("y"), var("z")
    vx, vy, vz = var("vx"), var("vy"), var("vz")
    return {
        "r": sqrt(add(add(power(x, 2), power(y, 2)), power(z, 2))),
        "R": sqrt(add(power(x, 2), power(y, 2))),
        "M1": sub(mul(y, vz), mul(z, vy)),
        "M2": sub(mul(z, vx), mul(x, vz)),
        "M3": sub(mul(x, vy), mul(y, vx)),
        "w": add(x, mul(I, y)),
        "wbar": sub(x, mul(I, y)),
    }


MACROS = ("r", "R", "M1", "M2", "M3", "w", "wbar")
_MACRO_EXPR = _macro_table()


def macro(name: str) -> Expr:
    return _MACRO_EXPR[name]


class UserFunction:
    """A named function given by an expression in dummy arguments ``s`` (or ``s1, s2, ...``)."""

    def __init__(self, argnames: Sequence[str], body: Expr):
        self.argnames = tuple(argnames)
        self.body = body

    def __call__(self, *args: Expr) -> Expr:
        if len(args) != len(self.argnames):
            raise ExprError(f"expected {len(self.argnames)} argument(s)")
        return substitute(self.body, dict(zip(self.argnames, args)))


_SINGLE = set("+-*/^(),")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in _SINGLE:
            toks.append(("op", c, i))
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                float(lit)
            except ValueError:
                raise ParseError(f"malformed number {lit!r}", i) from None
            toks.append(("num", lit, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("id", text[i:j], i))
            i = j
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, text, params, functions):
        self.toks = _tokenize(text)
        self.pos = 0
        self.params = params
        self.functions = functions

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, off = self.take()
        if val != value or kind != "op":
            raise ParseError(f"expected {value!r}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", off)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            left = add(left, right) if op == "+" else sub(left, right)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.unary()
            left = mul(left, right) if op == "*" else div(left, right)
        return left

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.pow()

    def pow(self) -> Expr:
        base = self.atom()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.take()
            eoff = self.peek()[2]
            e = self.unary_exponent()
            if not isinstance(e, Const):
                raise ParseError("exponent must be a rational constant", eoff)
            try:
                q = _to_fraction(e.value)
            except ExprError as exc:
                raise ParseError(str(exc), eoff) from None
            return power(base, q)
        return base

    def unary_exponent(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.unary_exponent())
        return self.pow()

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return const(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "id":
            is_call = self.peek()[0] == "op" and self.peek()[1] == "("
            if is_call:
                if val in FUNCTIONS:
                    args = self.args()
                    if len(args) != FUNCTIONS[val]:
                        raise ParseError(f"{val} takes {FUNCTIONS[val]} argument(s)", off)
                    return func(val, *args)
                if val in self.functions:
                    args = self.args()
                    f = self.functions[val]
                    if len(args) != len(f.argnames):
                        raise ParseError(f"{val} takes {len(f.argnames)} argument(s)", off)
                    return f(*args)
                raise UnknownIdentifier(val, off)
            if val == "i":
                return I
            if val in COORDS:
                return var(val)
            if val in _MACRO_EXPR:
                return _MACRO_EXPR[val]
            if val in self.params:
                return param(val)
            if val in FUNCTIONS or val in self.functions:
                raise ParseError(f"function {val} needs arguments", off)
            raise UnknownIdentifier(val, off)
        if kind == "end":
            raise ParseError("unexpected end of input", off)
        raise ParseError(f"unexpected {val!r}", off)

    def args(self) -> list[Expr]:
        self.expect("(")
        out = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            out.append(self.expr())
        self.expect(")")
        return out


def parse(
    text: str,
    params: Iterable[str] = (),
    functions: Mapping[str, UserFunction] | None = None,
) -> Expr:
    """Parse an expression.

    ``params`` lists the identifiers accepted as parameters; ``functions``
    maps names to :class:`UserFunction` objects that are expanded in place.
    """
    return _Parser(text, set(params), dict(functions or {})).parse()


def parse_canonical(text: str, params: Iterable[str] = ()) -> Expr:
    return parse(text, params)


def user_function(text: str, params: Iterable[str] = ()) -> UserFunction:
    """Build a :class:`UserFunction` from a body written in ``s`` or ``s1, s2, ...``.

    The dummy names are temporarily parsed as parameters.
    """
    names = ["s", "s1", "s2", "s3"]
    body = parse(text, list(params) + names)
    used = parameters(body) & set(names)
    if used <= {"s"}:
        argnames = ["s"]
    else:
        if "s" in used:
            raise ExprError("mix of s and s1.. in function body")
        k = max(int(n[1:]) for n in used)
        argnames = [f"s{j}" for j in range(1, k + 1)]
    return UserFunction(argnames, body)
