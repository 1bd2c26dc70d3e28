"""Compile expression DAGs to Python functions.

Two backends share one code generator:

* ``"numpy"`` evaluates over complex arrays (broadcasting the seven canonical
  arguments); singular points produce inf/nan instead of raising.
* ``"scalar"`` evaluates one point with :mod:`cmath`. When numba is importable
  the scalar function is jit-compiled, which is what makes long fixed-step
  integrations affordable.

Shared subtrees are emitted once, so the generated code is linear in the size
of the DAG rather than of the expanded tree.
"""

from __future__ import annotations

import cmath
import itertools
import math
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import (
    COORDS,
    Add,
    Const,
    Div,
    Expr,
    ExprError,
    Func,
    Mul,
    Param,
    Pow,
    Var,
    substitute,
    topological,
)

try:  # optional accelerator
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_counter = itertools.count()


def _np_atan2(y, x):
    y = np.asarray(y, dtype=complex)
    x = np.asarray(x, dtype=complex)
    real = (y.imag == 0) & (x.imag == 0)
    with np.errstate(all="ignore"):
        cplx = -1j * np.log((x + 1j * y) / np.sqrt(x * x + y * y))
    return np.where(real, np.arctan2(y.real, x.real), cplx)


def _py_atan2(y, x):
    if y.imag == 0 and x.imag == 0:
        return complex(math.atan2(y.real, x.real))
    return -1j * cmath.log((x + 1j * y) / cmath.sqrt(x * x + y * y))


_NUMPY_NS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "atan": np.arctan,
    "atan2": _np_atan2,
}

_SCALAR_NS = {
    "sin": cmath.sin,
    "cos": cmath.cos,
    "exp": cmath.exp,
    "log": cmath.log,
    "sqrt": cmath.sqrt,
    "atan": cmath.atan,
    "atan2": _py_atan2,
}

_jit_atan2 = None


def _literal(c: complex) -> str:
    if c.imag == 0:
        return repr(float(c.real))
    return f"complex({float(c.real)!r}, {float(c.imag)!r})"


def _ipow(name: str, n: int) -> str:
    if n == 0:
        return "1.0"
    k = abs(n)
    if k <= 8:
        body = "*".join([name] * k)
    else:
        body = f"{name}**{k}"
    return f"({body})" if n > 0 else f"(1.0/({body}))"


def generate_source(exprs: Sequence[Expr], fname: str = "_f", extra_min: Sequence[Expr] = (),
                    args: Sequence[str] = COORDS) -> str:
    """Python source for ``fname(*args)``, by default ``fname(t, x, y, z, vx, vy, vz)``.

    Returns a tuple of the expression values. When ``extra_min`` is non-empty
    one more value is appended: the smallest modulus among those expressions.
    """
    nodes = topological(list(exprs) + list(extra_min))
    names: dict[int, str] = {}
    lines = [f"def {fname}({', '.join(args)}):"]
    k = 0
    for node in nodes:
        if isinstance(node, Var):
            if node.name not in args:
                raise ExprError(f"{node.name!r} is not an argument of the compiled function")
            names[id(node)] = node.name
            continue
        if isinstance(node, Const):
            names[id(node)] = _literal(node.value)
            continue
        if isinstance(node, Param):
            raise ExprError(f"parameter {node.name!r} has no value; substitute it first")
        ch = [names[id(c)] for c in node.children]
        if isinstance(node, Add):
            rhs = f"{ch[0]} + {ch[1]}"
        elif isinstance(node, Mul):
            rhs = f"{ch[0]} * {ch[1]}"
        elif isinstance(node, Div):
            rhs = f"{ch[0]} / {ch[1]}"
        elif isinstance(node, Pow):
            q: Fraction = node.exp
            if q.denominator == 1:
                rhs = _ipow(ch[0], int(q))
            elif q.denominator == 2:
                lines.append(f"    _s{k} = sqrt({ch[0]})")
                rhs = _ipow(f"_s{k}", int(q.numerator))
            else:
                rhs = f"exp({float(q)!r} * log({ch[0]}))"
        elif isinstance(node, Func):
            rhs = f"{node.name}({', '.join(ch)})"
        else:  # pragma: no cover
            raise ExprError(f"cannot compile {node!r}")
        name = f"_t{k}"
        k += 1
        lines.append(f"    {name} = {rhs}")
        names[id(node)] = name
    outs = []
    for e in exprs:
        n = names[id(e)]
        outs.append(n if isinstance(e, Var) or n.startswith("_t") else f"complex({n})")
    if extra_min:
        mins = [f"abs({names[id(e)]})" for e in extra_min]
        expr = mins[0] if len(mins) == 1 else f"min({', '.join(mins)})"
        outs.append(expr)
    lines.append(f"    return ({', '.join(outs)}{',' if len(outs) == 1 else ''})")
    return "\n".join(lines) + "\n"


def _bind(exprs: Sequence[Expr], params: Mapping[str, complex] | None) -> list[Expr]:
    if not params:
        return list(exprs)
    return [substitute(e, params) for e in exprs]


def lambdify_numpy(exprs: Sequence[Expr], params: Mapping[str, complex] | None = None) -> Callable:
    """Vectorised evaluator: ``f(t, x, y, z, vx, vy, vz) -> complex array (k, *shape)``.

    Arguments broadcast against each other.
    """
    exprs = _bind(exprs, params)
    fname = f"_np{next(_counter)}"
    src = generate_source(exprs, fname)
    ns = dict(_NUMPY_NS)
    exec(compile(src, f"<{fname}>", "exec"), ns)
    raw = ns[fname]

    def f(t, x, y, z, vx, vy, vz):
        args = np.broadcast_arrays(*(np.asarray(a, dtype=complex) for a in (t, x, y, z, vx, vy, vz)))
        with np.errstate(all="ignore"):
            vals = raw(*args)
        shape = args[0].shape
        return np.stack([np.broadcast_to(np.asarray(v, dtype=complex), shape) for v in vals])

    f.source = src
    return f


def lambdify_scalar(
    exprs: Sequence[Expr],
    params: Mapping[str, complex] | None = None,
    extra_min: Sequence[Expr] = (),
    jit: bool = True,
    args: Sequence[str] = COORDS,
    signature=None,
) -> Callable:
    """Scalar evaluator returning a tuple; jit-compiled with numba when available."""
    exprs = _bind(exprs, params)
    extra_min = _bind(extra_min, params)
    fname = f"_sc{next(_counter)}"
    src = generate_source(exprs, fname, extra_min, args)
    ns = dict(_SCALAR_NS)
    if jit and HAVE_NUMBA:
        ns["atan2"] = _jitted_atan2()
    exec(compile(src, f"<{fname}>", "exec"), ns)
    fn = ns[fname]
    if jit and HAVE_NUMBA:
        if signature is not None:
            fn = numba.njit(signature, error_model="numpy")(fn)
        else:
            fn = numba.njit(error_model="numpy")(fn)
    return fn


def _jitted_atan2():
    global _jit_atan2
    if _jit_atan2 is None:

        def atan2c(y, x):
            if y.imag == 0 and x.imag == 0:
                return complex(math.atan2(y.real, x.real), 0.0)
            return -1j * cmath.log((x + 1j * y) / cmath.sqrt(x * x + y * y))

        _jit_atan2 = numba.njit(error_model="numpy")(atan2c)
    return _jit_atan2
