"""Random sample points in the extended phase space (t, q, v)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .codegen import lambdify_numpy
from .expr import Expr, singular_factors, substitute

POSITION_BOX = (0.3, 1.7)
VELOCITY_BOX = (-1.0, 1.0)
TIME_BOX = (0.0, 2.0)
MIN_DENOMINATOR = 1e-3
DEFAULT_SEED = 42


@dataclass
class Samples:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    vz: np.ndarray
    skipped: int = 0

    def args(self) -> tuple[np.ndarray, ...]:
        return (self.t, self.x, self.y, self.z, self.vx, self.vy, self.vz)

    def __len__(self) -> int:
        return len(self.x)

    def point(self, k: int) -> dict[str, complex]:
        names = ("t", "x", "y", "z", "vx", "vy", "vz")
        return {n: complex(a[k]) for n, a in zip(names, self.args())}

    def subset(self, mask: np.ndarray) -> "Samples":
        return Samples(*(a[mask] for a in self.args()), skipped=self.skipped + int((~mask).sum()))


def regular_mask(samples: Samples, exprs: Sequence[Expr], params: Mapping[str, complex] | None = None,
                 min_den: float = MIN_DENOMINATOR) -> np.ndarray:
    """True where no singular factor of ``exprs`` is smaller than ``min_den`` in modulus."""
    factors: list[Expr] = []
    for e in exprs:
        if params:
            e = substitute(e, params)
        factors.extend(singular_factors(e))
    mask = np.ones(len(samples), dtype=bool)
    if not factors:
        return mask
    vals = lambdify_numpy(factors)(*samples.args())
    mask &= np.all(np.isfinite(vals), axis=0)
    with np.errstate(invalid="ignore"):
        mask &= np.all(np.abs(vals) >= min_den, axis=0)
    return mask


def sample_points(
    n: int,
    seed: int | np.random.Generator = DEFAULT_SEED,
    guard: Sequence[Expr] = (),
    params: Mapping[str, complex] | None = None,
    position_box: tuple[float, float] = POSITION_BOX,
    velocity_box: tuple[float, float] = VELOCITY_BOX,
    time_box: tuple[float, float] = TIME_BOX,
    min_den: float = MIN_DENOMINATOR,
) -> Samples:
    """Draw ``n`` points, rejecting those near a singular locus of any ``guard`` expression."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    got: list[Samples] = []
    have = 0
    rejected = 0
    for _ in range(50):
        m = max(2 * (n - have), 16)
        t = rng.uniform(*time_box, m)
        q = rng.uniform(*position_box, (3, m))
        v = rng.uniform(*velocity_box, (3, m))
        s = Samples(t.astype(complex), *q.astype(complex), *v.astype(complex))
        mask = regular_mask(s, guard, params, min_den)
        rejected += int((~mask).sum())
        s = s.subset(mask)
        got.append(s)
        have += len(s)
        if have >= n:
            break
    else:
        raise ValueError("could not find enough regular sample points")
    cat = [np.concatenate([g.args()[i] for g in got])[:n] for i in range(7)]
    return Samples(*cat, skipped=rejected)
