"""Numerical search for autonomous quadratic first integrals of a potential.

For ``I = C_ab v^a v^b + G`` with ``C`` the general Killing tensor, the
requirement that ``2 C Q`` be a gradient is linear in the twenty Killing
tensor constants. Sampling it at many points gives an overdetermined
homogeneous system whose null space is the set of admissible tensors. Each
null vector is then completed with ``G``, reconstructed by quadrature and, when
possible, fitted against a dictionary of rational monomials.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .codegen import lambdify_numpy
from .expr import POSITIONS, Expr, ZERO, add, const, diff, mul, power, substitute, to_string, var
from .geometry import KtParams, general_kt, killing_tensor_defect
from .poisson import total_time_derivative
from .qfi import QuadratureError, axis_path, build_I10, integrability_conditions, reconstruct_G
from .sampling import DEFAULT_SEED, Samples, regular_mask, sample_points

DEFAULT_SAMPLES = 80
MIN_USABLE = 40
NULL_TOL = 1e-9
FIT_THRESHOLD = 1e-8
VERIFY_TOL = 1e-9
G_BASE = (1.0, 1.0, 1.0)


class DiscoveryError(ValueError):
    pass


# ---------------------------------------------------------------- linear system


def _column_exprs(V: Expr) -> list[list[Expr]]:
    """For each Killing tensor constant, the three integrability conditions it contributes."""
    return [integrability_conditions(general_kt(KtParams.basis(k)), V) for k in range(1, 21)]


def assemble_system(V: Expr, samples: Samples) -> np.ndarray:
    """Rows are the three integrability conditions at each sample, columns the 20 constants.

    Samples at which ``V`` or its derivatives are near singular are dropped.
    Each row is scaled to unit length; this leaves the null space unchanged.
    """
    cols = _column_exprs(V)
    flat = [e for c in cols for e in c]
    live = [e for e in flat if e is not ZERO]
    guard = [V] + [diff(V, q) for q in POSITIONS] + live
    mask = regular_mask(samples, guard)
    s = samples.subset(mask)
    if len(s) < MIN_USABLE:
        raise DiscoveryError(f"only {len(s)} usable samples, need {MIN_USABLE}")
    M = np.zeros((3 * len(s), 20), dtype=complex)
    if live:
        vals = lambdify_numpy(live)(*s.args())
        it = iter(vals)
        for k, c in enumerate(cols):
            for j, e in enumerate(c):
                if e is not ZERO:
                    M[j::3, k] = next(it)
    norms = np.linalg.norm(M, axis=1)
    keep = norms > 0
    M[keep] /= norms[keep, None]
    return M


def nullspace(M: np.ndarray, rel_tol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the right null space of ``M``."""
    n = M.shape[1]
    if M.size == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(M)
    smax = s[0] if len(s) else 0.0
    if smax == 0:
        return np.eye(n, dtype=complex)
    rank = int(np.sum(s > rel_tol * smax))
    return vh[rank:].conj().T


def echelon_basis(B: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Reduced column echelon form of a basis: the same span with unit pivots."""
    if B.shape[1] == 0:
        return B
    R = B.T.copy()
    rows, cols = R.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[p, c]) < tol:
            continue
        R[[r, p]] = R[[p, r]]
        R[r] /= R[r, c]
        for i in range(rows):
            if i != r:
                R[i] -= R[i, c] * R[r]
        r += 1
    R[np.abs(R) < tol] = 0
    return R.T


def projection_residual(B: np.ndarray, p: KtParams | Sequence) -> float:
    """Relative distance of ``p`` from the span of the orthonormal columns of ``B``."""
    v = p.vector() if isinstance(p, KtParams) else np.asarray(p, dtype=complex)
    nv = np.linalg.norm(v)
    if nv == 0:
        return 0.0
    Qb, _ = np.linalg.qr(B) if B.shape[1] else (B, None)
    rest = v - Qb @ (Qb.conj().T @ v) if B.shape[1] else v
    return float(np.linalg.norm(rest) / nv)


# ---------------------------------------------------------------- G fitting


def dictionary_exponents() -> list[tuple[int, int, int]]:
    """Exponents of the G dictionary: degree <= 4 monomials, q^-1, q^-2 and degree-2 monomials over q^2."""
    out: list[tuple[int, int, int]] = []
    for i, j, k in itertools.product(range(5), repeat=3):
        if i + j + k <= 4:
            out.append((i, j, k))
    for a in range(3):
        for p in (-1, -2):
            e = [0, 0, 0]
            e[a] = p
            out.append(tuple(e))
        for m in itertools.combinations_with_replacement(range(3), 2):
            e = [0, 0, 0]
            e[a] = -2
            for b in m:
                e[b] += 1
            out.append(tuple(e))
    return list(dict.fromkeys(out))


def g_dictionary() -> list[Expr]:
    x, y, z = (var(n) for n in POSITIONS)
    return [mul(mul(power(x, i), power(y, j)), power(z, k)) for i, j, k in dictionary_exponents()]


@dataclass
class GFit:
    expr: Expr | None
    coefficients: dict[str, complex]
    max_misfit: float

    def to_dict(self) -> dict:
        return {
            "expr": to_string(self.expr) if self.expr is not None else None,
            "coefficients": {k: [v.real, v.imag] for k, v in self.coefficients.items()},
            "max_misfit": self.max_misfit,
        }


def _snap(c: complex, digits: int = 8) -> complex:
    """Round to ``digits`` decimals when that moves the value by less than 1e-9 relative."""
    r = complex(round(c.real, digits), round(c.imag, digits))
    return r if abs(r - c) <= 1e-9 * max(1.0, abs(c)) else c


def fit_G(points: np.ndarray, values: np.ndarray, threshold: float = FIT_THRESHOLD) -> GFit:
    """Sparse least squares of sampled G against :func:`g_dictionary`, plus a constant.

    The constant absorbs the unknown value at the base point.
    """
    terms = g_dictionary()
    f = lambdify_numpy(terms)
    z0 = np.zeros(len(points), dtype=complex)
    A = f(z0, points[:, 0], points[:, 1], points[:, 2], z0, z0, z0).T
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1
    As = A / scale
    support = np.arange(A.shape[1])
    coef = np.zeros(A.shape[1], dtype=complex)
    for _ in range(5):
        sol, *_ = np.linalg.lstsq(As[:, support], values, rcond=None)
        c = np.zeros(A.shape[1], dtype=complex)
        c[support] = sol / scale[support]
        small = np.abs(c) < threshold
        if not np.any(small[support]):
            coef = c
            break
        support = support[~small[support]]
        coef = c
        coef[small] = 0
    coef = np.array([_snap(c) for c in coef])
    misfit = float(np.max(np.abs(A @ coef - values))) if len(values) else 0.0
    expr: Expr = ZERO
    named: dict[str, complex] = {}
    for k in np.nonzero(coef)[0]:
        c = complex(coef[k])
        if c.imag == 0 or abs(c.imag) < 1e-14 * abs(c):
            c = complex(c.real)
        expr = add(expr, mul(const(c), terms[k]))
        named[to_string(terms[k])] = c
    if misfit > 1e-7:
        return GFit(None, {}, misfit)
    return GFit(expr, named, misfit)


# ---------------------------------------------------------------- discovery


@dataclass
class Candidate:
    params: KtParams
    G_points: np.ndarray
    G_values: np.ndarray
    fit: GFit
    integral: Expr | None
    residual: float
    path_disagreement: float
    verified: bool

    def to_dict(self) -> dict:
        return {
            "kt_params": self.params.to_dict(),
            "G_fit": self.fit.to_dict(),
            "integral": to_string(self.integral) if self.integral is not None else None,
            "residual": self.residual,
            "path_disagreement": self.path_disagreement,
            "verified": self.verified,
        }


@dataclass
class DiscoveryResult:
    potential: str
    params: dict[str, complex]
    dimension: int
    basis: np.ndarray
    candidates: list[Candidate] = field(default_factory=list)
    samples_used: int = 0
    seed: int = DEFAULT_SEED

    def kt_params(self) -> list[KtParams]:
        return [KtParams(tuple(complex(v) for v in self.basis[:, j])) for j in range(self.basis.shape[1])]

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "seed": self.seed,
            "potential": self.potential,
            "params": {k: [complex(v).real, complex(v).imag] for k, v in self.params.items()},
            "nullspace_dimension": self.dimension,
            "samples_used": self.samples_used,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def _grid(rng: np.random.Generator, n: int, V: Expr) -> np.ndarray:
    s = sample_points(n, rng, guard=[V])
    return np.stack([s.x, s.y, s.z], axis=1)


def _max_abs(exprs: Sequence[Expr], samples: Samples) -> float:
    live = [e for e in exprs if e is not ZERO]
    if not live:
        return 0.0
    vals = lambdify_numpy(live)(*samples.args())
    mask = np.all(np.isfinite(vals), axis=0)
    return float(np.max(np.abs(vals[:, mask]))) if mask.any() else float("inf")


def discover(
    V: Expr,
    params: Mapping[str, complex] | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
    null_tol: float = NULL_TOL,
    grid_points: int = 120,
    verify_tol: float = VERIFY_TOL,
) -> DiscoveryResult:
    """Find the autonomous quadratic integrals of ``V`` and return the verified ones."""
    params = dict(params or {})
    Vb = substitute(V, params) if params else V
    rng = np.random.default_rng(seed)
    samples = sample_points(n_samples, rng, guard=[Vb])
    M = assemble_system(Vb, samples)
    B = nullspace(M, null_tol)
    E = echelon_basis(B)
    result = DiscoveryResult(to_string(V), params, B.shape[1], E, samples_used=M.shape[0] // 3, seed=seed)
    if B.shape[1] == 0:
        return result
    grid = _grid(rng, grid_points, Vb)
    fresh = sample_points(200, rng, guard=[Vb])
    for j in range(E.shape[1]):
        vec = E[:, j]
        vec = np.where(np.abs(vec.imag) < 1e-14, vec.real, vec)
        p = KtParams(tuple(complex(v) for v in vec))
        C = general_kt(p)
        try:
            G_vals = np.array([reconstruct_G(C, None, Vb, G_BASE, q) for q in grid])
            q0 = grid[0]
            disagree = abs(reconstruct_G(C, None, Vb, G_BASE, q0)
                           - reconstruct_G(C, None, Vb, G_BASE, q0, via=axis_path(G_BASE, q0)))
        except QuadratureError:
            G_vals = np.full(len(grid), np.nan, dtype=complex)
            disagree = float("inf")
        fit = fit_G(grid, G_vals) if np.all(np.isfinite(G_vals)) else GFit(None, {}, float("inf"))
        if fit.expr is not None:
            I = build_I10(C, fit.expr)
            residual = _max_abs([total_time_derivative(I, Vb)], fresh)
        else:
            I = None
            residual = _max_abs(killing_tensor_defect(C) + integrability_conditions(C, Vb), fresh)
        ok = residual <= verify_tol
        if ok:
            result.candidates.append(Candidate(p, grid, G_vals, fit, I, residual, disagree, ok))
    return result
