"""Killing vectors and Killing tensors of flat Euclidean space.

The general second-order Killing tensor of E^3 depends on twenty constants
``a1..a20``; the general Killing vector on six constants ``b1..b6``. Both are
built here as symbolic fields over ``x, y, z`` so they can be differentiated
and compiled like any other expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .codegen import lambdify_numpy
from .expr import POSITIONS, Expr, ZERO, add, as_expr, const, diff, mul, var
from .sampling import Samples

_INDEX = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5}
COMPONENTS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _pair(v) -> list[float]:
    c = complex(v)
    return [c.real, c.imag]


def _unpair(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


@dataclass(frozen=True)
class KtParams:
    """The twenty constants of the general Killing tensor."""

    a: tuple

    def __post_init__(self):
        if len(self.a) != 20:
            raise ValueError("a Killing tensor needs 20 parameters")

    def __getitem__(self, k: int):
        """1-based access, ``p[1]`` is a1."""
        return self.a[k - 1]

    @classmethod
    def zero(cls) -> "KtParams":
        return cls((0,) * 20)

    @classmethod
    def basis(cls, k: int) -> "KtParams":
        a = [0] * 20
        a[k - 1] = 1
        return cls(tuple(a))

    @classmethod
    def of(cls, **named) -> "KtParams":
        """``KtParams.of(a3=1, a13=1)``; unnamed entries are zero."""
        a = [0] * 20
        for key, value in named.items():
            a[int(key[1:]) - 1] = value
        return cls(tuple(a))

    def vector(self) -> np.ndarray:
        return np.array([complex(v) for v in self.a])

    def to_dict(self) -> dict:
        return {f"a{k + 1}": _pair(v) for k, v in enumerate(self.a)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "KtParams":
        return cls(tuple(_unpair(d.get(f"a{k + 1}", 0)) for k in range(20)))


@dataclass(frozen=True)
class KvParams:
    """The six constants of the general Killing vector."""

    b: tuple

    def __post_init__(self):
        if len(self.b) != 6:
            raise ValueError("a Killing vector needs 6 parameters")

    def __getitem__(self, k: int):
        return self.b[k - 1]

    def to_dict(self) -> dict:
        return {f"b{k + 1}": _pair(v) for k, v in enumerate(self.b)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "KvParams":
        return cls(tuple(_unpair(d.get(f"b{k + 1}", 0)) for k in range(6)))


@dataclass(frozen=True)
class VectorField:
    comps: tuple

    def __iter__(self) -> Iterator[Expr]:
        return iter(self.comps)

    def __getitem__(self, a: int) -> Expr:
        return self.comps[a]


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric 3x3 field stored as (11, 12, 13, 22, 23, 33)."""

    comps: tuple

    def __getitem__(self, ab) -> Expr:
        a, b = ab
        if a > b:
            a, b = b, a
        return self.comps[_INDEX[(a, b)]]

    def __add__(self, other: "SymTensorField") -> "SymTensorField":
        return SymTensorField(tuple(add(p, q) for p, q in zip(self.comps, other.comps)))

    def scale(self, c) -> "SymTensorField":
        c = as_expr(c)
        return SymTensorField(tuple(mul(c, p) for p in self.comps))

    def contract(self, u: Sequence[Expr], w: Sequence[Expr]) -> Expr:
        """C_ab u^a w^b."""
        out = ZERO
        for a in range(3):
            for b in range(3):
                out = add(out, mul(mul(self[a, b], u[a]), w[b]))
        return out

    def apply(self, u: Sequence[Expr]) -> list[Expr]:
        """(C u)_a = C_ab u^b."""
        return [_sum(mul(self[a, b], u[b]) for b in range(3)) for a in range(3)]


def _sum(terms) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def _lin(*terms) -> Expr:
    """Sum of coefficient * monomial pairs."""
    return _sum(mul(as_expr(c), m) for c, m in terms)


def general_kt(p: KtParams | Sequence) -> SymTensorField:
    """The general Killing tensor of E^3 with constants ``p``."""
    a = [None] + [as_expr(v) for v in (p.a if isinstance(p, KtParams) else p)]
    x, y, z = var("x"), var("y"), var("z")
    h = const(0.5)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    c11 = _lin((h * a[6], yy), (h * a[1], zz), (a[4], yz), (a[5], y), (a[2], z), (a[3], const(1)))
    c12 = _lin((h * a[10], zz), (-h * a[6], xy), (-h * a[4], xz), (-h * a[14], yz), (-h * a[5], x),
               (-h * a[15], y), (a[16], z), (a[17], const(1)))
    c13 = _lin((h * a[14], yy), (-h * a[4], xy), (-h * a[1], xz), (-h * a[10], yz), (-h * a[2], x),
               (a[18], y), (-h * a[11], z), (a[19], const(1)))
    c22 = _lin((h * a[6], xx), (h * a[7], zz), (a[14], xz), (a[15], x), (a[12], z), (a[13], const(1)))
    c23 = _lin((h * a[4], xx), (-h * a[14], xy), (-h * a[10], xz), (-h * a[7], yz),
               (-(a[16] + a[18]), x), (-h * a[12], y), (-h * a[8], z), (a[20], const(1)))
    c33 = _lin((h * a[1], xx), (h * a[7], yy), (a[10], xy), (a[11], x), (a[8], y), (a[9], const(1)))
    return SymTensorField((c11, c12, c13, c22, c23, c33))


def reducible_vector(p: KtParams | Sequence) -> VectorField:
    """Vector whose symmetrised gradient is the reducible part of ``general_kt(p)``."""
    a = [None] + [as_expr(v) for v in (p.a if isinstance(p, KtParams) else p)]
    x, y, z = var("x"), var("y"), var("z")
    one = const(1)
    two = const(2)
    l1 = _lin((-a[15], y * y), (-a[11], z * z), (a[5], x * y), (a[2], x * z), (two * (a[16] + a[18]), y * z),
              (a[3], x), (two * a[4], y), (two * a[1], z), (a[6], one))
    l2 = _lin((-a[5], x * x), (-a[8], z * z), (a[15], x * y), (-two * a[18], x * z), (a[12], y * z),
              (two * (a[17] - a[4]), x), (a[13], y), (two * a[7], z), (a[14], one))
    l3 = _lin((-a[2], x * x), (-a[12], y * y), (-two * a[16], x * y), (a[11], x * z), (a[8], y * z),
              (two * (a[19] - a[1]), x), (two * (a[20] - a[7]), y), (a[9], z), (a[10], one))
    return VectorField((l1, l2, l3))


def killing_vector(p: KvParams | Sequence) -> VectorField:
    """Translations (b1, b2, b3) plus rotations (b4 about z, b5 about y, b6 about x)."""
    b = [None] + [as_expr(v) for v in (p.b if isinstance(p, KvParams) else p)]
    x, y, z = var("x"), var("y"), var("z")
    return VectorField((
        b[1] - b[4] * y + b[5] * z,
        b[2] + b[4] * x - b[6] * z,
        b[3] - b[5] * x + b[6] * y,
    ))


def sym_gradient(L: VectorField) -> SymTensorField:
    """L_(a;b) = (dL_b/dq^a + dL_a/dq^b) / 2."""
    h = const(0.5)
    return SymTensorField(tuple(
        mul(h, add(diff(L[b], POSITIONS[a]), diff(L[a], POSITIONS[b]))) for a, b in COMPONENTS
    ))


def killing_tensor_defect(C: SymTensorField) -> list[Expr]:
    """The ten components of the totally symmetrised gradient of ``C``."""
    out = []
    for a in range(3):
        for b in range(a, 3):
            for c in range(b, 3):
                out.append(_sum((
                    diff(C[b, c], POSITIONS[a]),
                    diff(C[a, c], POSITIONS[b]),
                    diff(C[a, b], POSITIONS[c]),
                )))
    return out


def killing_vector_defect(L: VectorField) -> list[Expr]:
    return list(sym_gradient(L).comps)


def _max_abs(exprs: Sequence[Expr], samples: Samples) -> float:
    live = [e for e in exprs if e is not ZERO]
    if not live:
        return 0.0
    vals = lambdify_numpy(live)(*samples.args())
    return float(np.max(np.abs(vals)))


def is_killing_tensor(C: SymTensorField, samples: Samples, tol: float = 1e-12) -> tuple[bool, float]:
    res = _max_abs(killing_tensor_defect(C), samples)
    return res <= tol, res


def is_killing_vector(L: VectorField, samples: Samples, tol: float = 1e-12) -> tuple[bool, float]:
    res = _max_abs(killing_vector_defect(L), samples)
    return res <= tol, res


def fit_kt_params(C: SymTensorField, samples: Samples) -> tuple[KtParams, float]:
    """Least-squares ``a`` with ``general_kt(a) = C`` on the samples; returns (a, max misfit)."""
    target = lambdify_numpy(list(C.comps))(*samples.args())  # (6, n)
    cols = []
    for k in range(1, 21):
        basis = general_kt(KtParams.basis(k))
        cols.append(lambdify_numpy(list(basis.comps))(*samples.args()).ravel())
    A = np.stack(cols, axis=1)
    sol, *_ = np.linalg.lstsq(A, target.ravel(), rcond=None)
    misfit = float(np.max(np.abs(A @ sol - target.ravel()))) if len(target.ravel()) else 0.0
    return KtParams(tuple(complex(v) for v in sol)), misfit
