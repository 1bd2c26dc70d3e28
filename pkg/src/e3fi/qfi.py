"""Quadratic first integrals built from Killing tensors, and their conditions.

Families (``Q_a = dV/dq^a``, summation over repeated indices):

``I11``  (-t^2/2 L(a;b) + C_ab) v^a v^b + t L_a v^a + t^2/2 L_a Q^a + G
``I20``  -t L(a;b) v^a v^b + L_a v^a + t L_a Q^a
``I3``   e^(lam t) (-L(a;b) v^a v^b + lam L_a v^a + L_a Q^a)
``LFI``  L_a v^a + s t, with L a Killing vector

The autonomous quadratic integrals ``I10`` are ``I11`` with ``L = 0``.
The conditions are checked numerically on random samples and reported as
:class:`ConditionReport` records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad_vec

from .codegen import lambdify_numpy
from .expr import (
    POSITIONS,
    VELOCITIES,
    Expr,
    ZERO,
    add,
    const,
    diff,
    exp,
    mul,
    neg,
    sub,
    substitute,
    var,
)
from .geometry import SymTensorField, VectorField, killing_tensor_defect, killing_vector_defect, sym_gradient
from .sampling import MIN_DENOMINATOR, Samples, regular_mask

FAMILIES = ("I10", "I11", "I20", "I3", "LFI", "generic")
MAX_SKIPPED_FRACTION = 0.2


class TooManySingularSamples(ValueError):
    pass


@dataclass
class ConditionReport:
    condition_name: str
    max_residual: float
    samples_used: int
    samples_skipped: int
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "condition_name": self.condition_name,
            "max_residual": self.max_residual,
            "samples_used": self.samples_used,
            "samples_skipped": self.samples_skipped,
            "tol": self.tol,
            "pass": self.passed,
        }


def _sum(terms) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def _v() -> list[Expr]:
    return [var(n) for n in VELOCITIES]


def _grad(f: Expr) -> list[Expr]:
    return [diff(f, n) for n in POSITIONS]


def _dot(u: Sequence[Expr], w: Sequence[Expr]) -> Expr:
    return _sum(mul(a, b) for a, b in zip(u, w))


# ---------------------------------------------------------------- builders


def build_I11(C: SymTensorField, L: VectorField, G: Expr, V: Expr) -> Expr:
    t = var("t")
    v = _v()
    K = sym_gradient(L)
    h = const(0.5)
    tt = mul(h, mul(t, t))
    quad = _sum(mul(sub(C[a, b], mul(tt, K[a, b])), mul(v[a], v[b])) for a in range(3) for b in range(3))
    LQ = _dot(L, _grad(V))
    return _sum((quad, mul(t, _dot(L, v)), mul(tt, LQ), G))


def build_I10(C: SymTensorField, G: Expr) -> Expr:
    return add(C.contract(_v(), _v()), G)


def build_I20(L: VectorField, V: Expr) -> Expr:
    t = var("t")
    v = _v()
    K = sym_gradient(L)
    return _sum((neg(mul(t, K.contract(v, v))), _dot(L, v), mul(t, _dot(L, _grad(V)))))


def build_I3(L: VectorField, lam, V: Expr) -> Expr:
    lam = complex(lam)
    if lam == 0:
        raise ValueError("the exponential family needs a nonzero lambda")
    v = _v()
    K = sym_gradient(L)
    lamc = const(lam)
    body = _sum((neg(K.contract(v, v)), mul(lamc, _dot(L, v)), _dot(L, _grad(V))))
    return mul(exp(mul(lamc, var("t"))), body)


def build_LFI(L: VectorField, s) -> Expr:
    return add(_dot(L, _v()), mul(const(s), var("t")))


# ---------------------------------------------------------------- extraction


@dataclass
class QfiParts:
    family: str
    C: SymTensorField | None = None
    L: VectorField | None = None
    G: Expr | None = None
    lam: complex | None = None
    s: Expr | None = None


def _at_origin(e: Expr, keep_t: bool = False) -> Expr:
    zero = {n: 0 for n in VELOCITIES}
    if not keep_t:
        zero["t"] = 0
    return substitute(e, zero)


def extract_parts(I: Expr, family: str, lam=None) -> QfiParts:
    """Read C, L and G off a first integral written in one of the families."""
    v = VELOCITIES
    if family in ("I10", "I11"):
        C = SymTensorField(tuple(
            _at_origin(mul(const(0.5), diff(diff(I, v[a]), v[b])))
            for a, b in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
        ))
        if family == "I10":
            L = VectorField((ZERO, ZERO, ZERO))
        else:
            L = VectorField(tuple(_at_origin(diff(diff(I, "t"), v[a])) for a in range(3)))
        return QfiParts(family, C=C, L=L, G=_at_origin(I))
    if family == "I20":
        return QfiParts(family, L=VectorField(tuple(_at_origin(diff(I, v[a])) for a in range(3))))
    if family == "I3":
        lam = complex(lam)
        if lam == 0:
            raise ValueError("the exponential family needs a nonzero lambda")
        inv = const(1 / lam)
        return QfiParts(family, lam=lam,
                        L=VectorField(tuple(_at_origin(mul(inv, diff(I, v[a]))) for a in range(3))))
    if family == "LFI":
        return QfiParts(family, L=VectorField(tuple(_at_origin(diff(I, v[a])) for a in range(3))),
                        s=_at_origin(diff(I, "t")))
    raise ValueError(f"no structure to extract for family {family!r}")


def rebuild(parts: QfiParts, V: Expr) -> Expr:
    if parts.family == "I10":
        return build_I10(parts.C, parts.G)
    if parts.family == "I11":
        return build_I11(parts.C, parts.L, parts.G, V)
    if parts.family == "I20":
        return build_I20(parts.L, V)
    if parts.family == "I3":
        return build_I3(parts.L, parts.lam, V)
    if parts.family == "LFI":
        return add(_dot(parts.L, _v()), mul(parts.s, var("t")))
    raise ValueError(parts.family)


# ---------------------------------------------------------------- conditions


def vector_condition(L: VectorField, V: Expr, lam=None) -> list[Expr]:
    """(L_b Q^b)_,a + 2 L(a;b) Q^b (+ lam^2 L_a)."""
    Q = _grad(V)
    LQ = _dot(L, Q)
    K = sym_gradient(L)
    KQ = K.apply(Q)
    out = [add(diff(LQ, POSITIONS[a]), mul(const(2), KQ[a])) for a in range(3)]
    if lam is not None:
        l2 = const(complex(lam) ** 2)
        out = [add(o, mul(l2, L[a])) for a, o in enumerate(out)]
    return out


def g_gradient(C: SymTensorField, L: VectorField, V: Expr) -> list[Expr]:
    """The field 2 C_ab Q^b - L_a that must be a gradient, dG."""
    CQ = C.apply(_grad(V))
    return [sub(mul(const(2), CQ[a]), L[a]) for a in range(3)]


def curl(F: Sequence[Expr]) -> list[Expr]:
    """Components (xy, xz, yz) of dF_b/dq^a - dF_a/dq^b."""
    x, y, z = POSITIONS
    return [
        sub(diff(F[1], x), diff(F[0], y)),
        sub(diff(F[2], x), diff(F[0], z)),
        sub(diff(F[2], y), diff(F[1], z)),
    ]


def integrability_conditions(C: SymTensorField, V: Expr, L: VectorField | None = None) -> list[Expr]:
    """Conditions for G to exist: the curl of 2 C Q - L vanishes."""
    if L is None:
        L = VectorField((ZERO, ZERO, ZERO))
    return curl(g_gradient(C, L, V))


def evaluate_condition(
    name: str,
    exprs: Sequence[Expr],
    samples: Samples,
    tol: float,
    min_den: float = MIN_DENOMINATOR,
    max_skipped: float = MAX_SKIPPED_FRACTION,
) -> ConditionReport:
    """Max |residual| over regular samples.

    Samples near a singular locus of the residual expressions are skipped;
    skipping more than ``max_skipped`` of them raises.
    """
    live = [e for e in exprs if e is not ZERO]
    n = len(samples)
    if not live:
        return ConditionReport(name, 0.0, n, 0, tol, True)
    mask = regular_mask(samples, live, min_den=min_den)
    vals = lambdify_numpy(live)(*samples.args())
    mask &= np.all(np.isfinite(vals), axis=0)
    skipped = int((~mask).sum())
    if n == 0 or skipped > max_skipped * n:
        raise TooManySingularSamples(f"{name}: {skipped} of {n} samples are singular")
    res = float(np.max(np.abs(vals[:, mask]))) if mask.any() else 0.0
    return ConditionReport(name, res, n - skipped, skipped, tol, bool(res <= tol))


def residuals_I11(C: SymTensorField, L: VectorField, V: Expr, samples: Samples, tol: float = 1e-10,
                  G: Expr | None = None) -> list[ConditionReport]:
    reports = [
        evaluate_condition("C is a Killing tensor", killing_tensor_defect(C), samples, tol),
        evaluate_condition("L(a;b) is a Killing tensor", killing_tensor_defect(sym_gradient(L)), samples, tol),
        evaluate_condition("vector condition", vector_condition(L, V), samples, tol),
        evaluate_condition("integrability of G", integrability_conditions(C, V, L), samples, tol),
    ]
    if G is not None:
        dG = g_gradient(C, L, V)
        reports.append(evaluate_condition(
            "gradient of G", [sub(diff(G, POSITIONS[a]), dG[a]) for a in range(3)], samples, tol))
    return reports


def residuals_I20(L: VectorField, V: Expr, samples: Samples, tol: float = 1e-10) -> list[ConditionReport]:
    return [
        evaluate_condition("L(a;b) is a Killing tensor", killing_tensor_defect(sym_gradient(L)), samples, tol),
        evaluate_condition("vector condition", vector_condition(L, V), samples, tol),
    ]


def residuals_I3(L: VectorField, lam, V: Expr, samples: Samples, tol: float = 1e-10) -> list[ConditionReport]:
    if complex(lam) == 0:
        raise ValueError("the exponential family needs a nonzero lambda")
    return [
        evaluate_condition("L(a;b) is a Killing tensor", killing_tensor_defect(sym_gradient(L)), samples, tol),
        evaluate_condition("vector condition with lambda", vector_condition(L, V, lam), samples, tol),
    ]


def residuals_LFI(L: VectorField, s: Expr, V: Expr, samples: Samples, tol: float = 1e-10) -> list[ConditionReport]:
    return [
        evaluate_condition("L is a Killing vector", killing_vector_defect(L), samples, tol),
        evaluate_condition("L_a Q^a = s", [sub(_dot(L, _grad(V)), s)], samples, tol),
    ]


def family_residuals(I: Expr, family: str, V: Expr, samples: Samples, tol: float = 1e-10,
                     lam=None) -> list[ConditionReport]:
    """Extract the family structure from ``I`` and check every condition of the family.

    The first report confirms that ``I`` really has the stated form.
    """
    if family == "generic":
        return []
    parts = extract_parts(I, family, lam)
    form = evaluate_condition(f"has {family} form", [sub(I, rebuild(parts, V))], samples, tol)
    if family in ("I10", "I11"):
        rest = residuals_I11(parts.C, parts.L, V, samples, tol, G=parts.G)
    elif family == "I20":
        rest = residuals_I20(parts.L, V, samples, tol)
    elif family == "I3":
        rest = residuals_I3(parts.L, parts.lam, V, samples, tol)
    else:
        rest = residuals_LFI(parts.L, parts.s, V, samples, tol)
    return [form] + rest


# ---------------------------------------------------------------- G by quadrature

QUAD_TOL = 1e-11


class QuadratureError(RuntimeError):
    pass


def _segment_integral(field, p0: np.ndarray, p1: np.ndarray, tol: float) -> complex:
    d = p1 - p0
    zero = np.zeros(1, dtype=complex)

    def integrand(s: float) -> np.ndarray:
        q = p0 + s * d
        F = field(zero, q[0:1], q[1:2], q[2:3], zero, zero, zero)[:, 0]
        val = complex(np.dot(F, d))
        return np.array([val.real, val.imag])

    res, err = quad_vec(integrand, 0.0, 1.0, epsabs=tol, epsrel=0.0)
    if not np.all(np.isfinite(res)):
        raise QuadratureError(f"non-finite integrand on segment {p0} -> {p1}")
    if err > 100 * tol:
        raise QuadratureError(f"quadrature error estimate {err:.2e} on segment {p0} -> {p1}")
    return complex(res[0], res[1])


def reconstruct_G(C: SymTensorField, L: VectorField | None, V: Expr, base, target,
                  via: Sequence | None = None, tol: float = QUAD_TOL) -> complex:
    """G(target) - G(base) as the line integral of ``2 C Q - L``.

    The path is the straight segment, or the polyline through the points in
    ``via``. When the integrability conditions hold the answer does not depend
    on the path.
    """
    if L is None:
        L = VectorField((ZERO, ZERO, ZERO))
    grad = g_gradient(C, L, V)
    if all(g is ZERO for g in grad):
        return 0j
    field = lambdify_numpy(grad)
    pts = [np.asarray(base, dtype=complex)]
    pts += [np.asarray(p, dtype=complex) for p in (via or ())]
    pts.append(np.asarray(target, dtype=complex))
    return sum((_segment_integral(field, a, b, tol) for a, b in zip(pts, pts[1:])), 0j)


def axis_path(base, target) -> list:
    """Corners of the x-then-y-then-z staircase from ``base`` to ``target``."""
    b = [complex(c) for c in base]
    t = [complex(c) for c in target]
    return [(t[0], b[1], b[2]), (t[0], t[1], b[2])]


def path_disagreement(C: SymTensorField, L: VectorField | None, V: Expr, base, target,
                      tol: float = QUAD_TOL) -> float:
    """|straight - staircase| for the reconstruction of G between two points."""
    g1 = reconstruct_G(C, L, V, base, target, tol=tol)
    g2 = reconstruct_G(C, L, V, base, target, via=axis_path(base, target), tol=tol)
    return abs(g1 - g2)
