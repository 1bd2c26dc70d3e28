"""Poisson brackets and total time derivatives along the flow of H = |v|^2/2 + V."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .codegen import lambdify_numpy
from .expr import POSITIONS, VELOCITIES, Expr, ZERO, add, const, diff, mul, power, sub, var
from .sampling import Samples, regular_mask


def hamiltonian(V: Expr) -> Expr:
    kin = ZERO
    for n in VELOCITIES:
        kin = add(kin, power(var(n), 2))
    return add(mul(const(0.5), kin), V)


def bracket(A: Expr, B: Expr) -> Expr:
    """{A, B} = sum_a dA/dq^a dB/dv^a - dA/dv^a dB/dq^a."""
    out = ZERO
    for q, v in zip(POSITIONS, VELOCITIES):
        out = add(out, sub(mul(diff(A, q), diff(B, v)), mul(diff(A, v), diff(B, q))))
    return out


def total_time_derivative(I: Expr, V: Expr) -> Expr:
    """dI/dt = dI/dt|explicit + {I, H} along Newton's equations with potential V."""
    out = diff(I, "t")
    for q, v in zip(POSITIONS, VELOCITIES):
        out = add(out, sub(mul(diff(I, q), var(v)), mul(diff(I, v), diff(V, q))))
    return out


def bracket_matrix(fis: Sequence[Expr], samples: Samples) -> np.ndarray:
    """max |{I_i, I_j}| over the regular samples, as a symmetric matrix."""
    k = len(fis)
    out = np.zeros((k, k))
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    if not pairs:
        return out
    brs = [bracket(fis[i], fis[j]) for i, j in pairs]
    mask = regular_mask(samples, list(fis) + brs)
    vals = lambdify_numpy(brs)(*samples.subset(mask).args())
    for (i, j), row in zip(pairs, vals):
        row = row[np.isfinite(row)]
        out[i, j] = out[j, i] = float(np.max(np.abs(row))) if len(row) else 0.0
    return out


def in_involution(fis: Sequence[Expr], samples: Samples, tol: float = 1e-10) -> tuple[bool, np.ndarray]:
    """Whether every pairwise bracket vanishes on the samples, with the residual matrix."""
    m = bracket_matrix(fis, samples)
    return bool(np.all(m <= tol)), m
