"""Independence, involution and the integrability verdict for a set of first integrals.

Functional independence is the numerical rank of the Jacobian with respect to
(t, x, y, z, vx, vy, vz), maximised over sample points. Rows are normalised
first, so rescaling a first integral never changes the rank.

Verdicts:

* ``integrable``: some 3 independent integrals are pairwise in involution.
* ``minimally-superintegrable``: integrable with 4 independent integrals.
* ``maximally-superintegrable``: integrable with 5 or more.
* ``not-established``: no involutive independent triple among those given.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .codegen import lambdify_numpy
from .expr import COORDS, Expr, ZERO, diff, sub
from .poisson import bracket, hamiltonian
from .sampling import Samples, regular_mask

SVD_TOL = 1e-8
INVOLUTION_TOL = 1e-9
MAX_WITNESS = 6

VERDICTS = ("not-established", "integrable", "minimally-superintegrable", "maximally-superintegrable")


def _jacobians(fis: Sequence[Expr], samples: Samples) -> np.ndarray:
    """Row-normalised Jacobians, shape (n_samples, k, 7); singular samples dropped."""
    grads = [diff(f, c) for f in fis for c in COORDS]
    vals = lambdify_numpy(grads)(*samples.args())  # (k*7, n)
    J = vals.reshape(len(fis), 7, -1).transpose(2, 0, 1)
    ok = np.all(np.isfinite(J), axis=(1, 2))
    J = J[ok]
    norms = np.linalg.norm(J, axis=2, keepdims=True)
    norms[norms == 0] = 1.0
    return J / norms


def _rank(J: np.ndarray, tol: float) -> int:
    if J.shape[0] == 0 or J.shape[1] == 0:
        return 0
    s = np.linalg.svd(J, compute_uv=False)
    smax = s[:, :1]
    ranks = np.sum(s > tol * np.where(smax > 0, smax, 1.0), axis=1)
    ranks[smax[:, 0] == 0] = 0
    return int(ranks.max())


def jacobian_rank(fis: Sequence[Expr], samples: Samples, svd_tol: float = SVD_TOL) -> int:
    """Number of functionally independent expressions among ``fis``."""
    if not fis:
        return 0
    return _rank(_jacobians(fis, samples), svd_tol)


def verify_relation(lhs: Expr, rhs: Expr, samples: Samples, tol: float = 1e-10) -> tuple[bool, float]:
    """Whether ``lhs = rhs`` at every regular sample, with the max deviation."""
    d = sub(lhs, rhs)
    mask = regular_mask(samples, [lhs, rhs])
    if d is ZERO:
        return True, 0.0
    vals = lambdify_numpy([d])(*samples.subset(mask).args())[0]
    vals = vals[np.isfinite(vals)]
    res = float(np.max(np.abs(vals))) if len(vals) else 0.0
    return res <= tol, res


def bracket_residual(A: Expr, B: Expr, samples: Samples) -> float:
    """max over samples of |{A, B}| / (|grad A| |grad B|), a scale-free involution measure."""
    exprs = [bracket(A, B)] + [diff(A, c) for c in COORDS] + [diff(B, c) for c in COORDS]
    vals = lambdify_numpy(exprs)(*samples.args())
    ok = np.all(np.isfinite(vals), axis=0)
    vals = vals[:, ok]
    if vals.shape[1] == 0:
        return float("nan")
    na = np.linalg.norm(vals[1:8], axis=0)
    nb = np.linalg.norm(vals[8:15], axis=0)
    scale = np.maximum(na * nb, 1e-300)
    return float(np.max(np.abs(vals[0]) / scale))


@dataclass
class ClassificationResult:
    verdict: str
    independent_count: int
    names: list[str]
    involutive_triple: list[str] | None = None
    witness: list[str] | None = None
    brackets: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "independent_count": self.independent_count,
            "names": self.names,
            "involutive_triple": self.involutive_triple,
            "witness": self.witness,
        }


def classify(
    fis: Sequence[tuple[str, Expr]],
    V: Expr,
    samples: Samples,
    svd_tol: float = SVD_TOL,
    inv_tol: float = INVOLUTION_TOL,
    include_hamiltonian: bool = True,
) -> ClassificationResult:
    """Classify the system with potential ``V`` from the given (name, integral) pairs.

    The Hamiltonian is always added (as ``H``) unless ``include_hamiltonian``
    is false.
    """
    items = list(fis)
    if include_hamiltonian:
        items = [("H", hamiltonian(V))] + items
    names = [n for n, _ in items]
    exprs = [e for _, e in items]
    J = _jacobians(exprs, samples)
    total = _rank(J, svd_tol)

    inv: dict[tuple[int, int], bool] = {}
    scores: dict[str, float] = {}

    def in_involution(i: int, j: int) -> bool:
        key = (min(i, j), max(i, j))
        if key not in inv:
            res = bracket_residual(exprs[key[0]], exprs[key[1]], samples)
            scores[f"{names[key[0]]},{names[key[1]]}"] = res
            inv[key] = bool(res <= inv_tol)
        return inv[key]

    triple = None
    for idx in combinations(range(len(exprs)), 3):
        if _rank(J[:, list(idx), :], svd_tol) < 3:
            continue
        if all(in_involution(i, j) for i, j in combinations(idx, 2)):
            triple = idx
            break

    if triple is None:
        verdict = "not-established"
    elif total >= 5:
        verdict = "maximally-superintegrable"
    elif total == 4:
        verdict = "minimally-superintegrable"
    else:
        verdict = "integrable"

    witness = _witness(J, total, triple, svd_tol)
    return ClassificationResult(
        verdict=verdict,
        independent_count=total,
        names=names,
        involutive_triple=[names[i] for i in triple] if triple else None,
        witness=[names[i] for i in witness] if witness else None,
        brackets=scores,
    )


def _witness(J: np.ndarray, total: int, seed: tuple | None, svd_tol: float) -> list[int] | None:
    """A subset of ``total`` independent integrals, containing ``seed`` when possible."""
    k = J.shape[1]
    if total == 0 or total > MAX_WITNESS:
        return None
    base = list(seed) if seed else []
    rest = [i for i in range(k) if i not in base]
    need = total - len(base)
    if need < 0:
        return None
    for extra in combinations(rest, need):
        idx = sorted(base + list(extra))
        if _rank(J[:, idx, :], svd_tol) == total:
            return idx
    if base:
        return _witness(J, total, None, svd_tol)
    return None
