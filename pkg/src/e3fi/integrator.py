"""Fixed-step RK4 for q'' = -grad V with complex state, and conservation drift."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .codegen import HAVE_NUMBA, lambdify_numpy, lambdify_scalar
from .expr import POSITIONS, Expr, const, diff, neg, singular_factors, substitute

DEFAULT_STEP = 1e-3
SINGULAR_GUARD = 1e-4
ESCAPE_RADIUS = 1e6

OK, SINGULAR, NONFINITE, ESCAPED = 0, 1, 2, 3
STATUS = {OK: "ok", SINGULAR: "singular", NONFINITE: "non-finite", ESCAPED: "escaped"}


def _rk4_loop(acc, state, h, n, guard, escape, out):
    x, y, z, vx, vy, vz = state[0], state[1], state[2], state[3], state[4], state[5]
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = z
    out[0, 3] = vx
    out[0, 4] = vy
    out[0, 5] = vz
    hh = 0.5 * h
    for k in range(n):
        a1x, a1y, a1z, d = acc(x, y, z)
        if not d >= guard:
            return k, 1
        b1x, b1y, b1z = vx, vy, vz
        a2x, a2y, a2z, d2 = acc(x + hh * b1x, y + hh * b1y, z + hh * b1z)
        b2x, b2y, b2z = vx + hh * a1x, vy + hh * a1y, vz + hh * a1z
        a3x, a3y, a3z, d3 = acc(x + hh * b2x, y + hh * b2y, z + hh * b2z)
        b3x, b3y, b3z = vx + hh * a2x, vy + hh * a2y, vz + hh * a2z
        a4x, a4y, a4z, d4 = acc(x + h * b3x, y + h * b3y, z + h * b3z)
        b4x, b4y, b4z = vx + h * a3x, vy + h * a3y, vz + h * a3z
        s = h / 6.0
        x = x + s * (b1x + 2.0 * b2x + 2.0 * b3x + b4x)
        y = y + s * (b1y + 2.0 * b2y + 2.0 * b3y + b4y)
        z = z + s * (b1z + 2.0 * b2z + 2.0 * b3z + b4z)
        vx = vx + s * (a1x + 2.0 * a2x + 2.0 * a3x + a4x)
        vy = vy + s * (a1y + 2.0 * a2y + 2.0 * a3y + a4y)
        vz = vz + s * (a1z + 2.0 * a2z + 2.0 * a3z + a4z)
        m = abs(x) + abs(y) + abs(z) + abs(vx) + abs(vy) + abs(vz)
        if not m < 1e300:
            return k, 2
        if m > escape:
            return k, 3
        out[k + 1, 0] = x
        out[k + 1, 1] = y
        out[k + 1, 2] = z
        out[k + 1, 3] = vx
        out[k + 1, 4] = vy
        out[k + 1, 5] = vz
    return n, 0


_jit_loop = None


def _signatures():
    from numba import types

    c = types.complex128
    force = types.Tuple((c, c, c, types.float64))(c, c, c)
    loop = types.Tuple((types.int64, types.int64))(
        types.FunctionType(force), c[:], types.float64, types.int64, types.float64, types.float64, c[:, :]
    )
    return force, loop


def _loop():
    """The RK4 loop compiled once; forces are passed as typed first-class functions."""
    global _jit_loop
    if not HAVE_NUMBA:
        return _rk4_loop
    if _jit_loop is None:
        import numba

        _jit_loop = numba.njit(_signatures()[1], error_model="numpy", cache=True)(_rk4_loop)
    return _jit_loop


class Accelerator:
    """Compiled -grad V together with the smallest modulus of its singular factors."""

    def __init__(self, V: Expr, params: Mapping[str, complex] | None = None, jit: bool = True):
        if params:
            V = substitute(V, params)
        self.V = V
        self.force = [neg(diff(V, n)) for n in POSITIONS]
        factors = []
        for f in self.force:
            factors.extend(singular_factors(f))
        if not factors:
            factors = [const(1e300)]
        self.jit = jit and HAVE_NUMBA
        sig = _signatures()[0] if self.jit else None
        fn = lambdify_scalar(self.force, extra_min=factors, jit=self.jit, args=POSITIONS, signature=sig)
        if not self.jit:
            raw = fn

            def fn(x, y, z):
                try:
                    return raw(x, y, z)
                except (ZeroDivisionError, ValueError, OverflowError):
                    return 0j, 0j, 0j, 0.0

        self.fn = fn


def rhs(V: Expr | Accelerator, params: Mapping[str, complex] | None = None):
    """The vector field (q, v) -> (v, -grad V(q)) on 6-component states."""
    acc = V if isinstance(V, Accelerator) else Accelerator(V, params, jit=False)

    def f(state: Sequence[complex]) -> np.ndarray:
        s = np.asarray(state, dtype=complex)
        ax, ay, az, _ = acc.fn(complex(s[0]), complex(s[1]), complex(s[2]))
        return np.array([s[3], s[4], s[5], ax, ay, az], dtype=complex)

    return f


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n, 6) complex: x, y, z, vx, vy, vz
    status: str
    h: float

    @property
    def aborted(self) -> bool:
        return self.status != "ok"

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def columns(self) -> tuple[np.ndarray, ...]:
        s = self.states
        return (self.t, s[:, 0], s[:, 1], s[:, 2], s[:, 3], s[:, 4], s[:, 5])

    def to_csv(self, path) -> None:
        names = ("x", "y", "z", "vx", "vy", "vz")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{p}_{n}" for n in names for p in ("re", "im")])
            for k in range(len(self.t)):
                row = [repr(float(self.t[k]))]
                for c in self.states[k]:
                    row += [repr(float(c.real)), repr(float(c.imag))]
                w.writerow(row)


def integrate(
    V: Expr | Accelerator,
    state0: Sequence[complex],
    t_end: float = 10.0,
    h: float = DEFAULT_STEP,
    t0: float = 0.0,
    guard: float = SINGULAR_GUARD,
    escape: float = ESCAPE_RADIUS,
    params: Mapping[str, complex] | None = None,
) -> Trajectory:
    """Integrate from ``state0 = (x, y, z, vx, vy, vz)`` with fixed step ``h``.

    Integration stops early, keeping the last good state, when a singular
    factor of the force gets smaller than ``guard`` in modulus, when the state
    stops being finite, or when it leaves the ball of radius ``escape``.
    """
    acc = V if isinstance(V, Accelerator) else Accelerator(V, params)
    n = int(round((t_end - t0) / h))
    out = np.zeros((n + 1, 6), dtype=complex)
    state = np.asarray(state0, dtype=complex)
    loop = _loop() if acc.jit else _rk4_loop
    try:
        last, code = loop(acc.fn, state, float(h), n, float(guard), float(escape), out)
    except (ZeroDivisionError, ValueError, OverflowError):  # pure-python fallback only
        last, code = 0, SINGULAR
    last = int(last)
    t = t0 + h * np.arange(last + 1)
    return Trajectory(t, out[: last + 1].copy(), STATUS[int(code)], h)


def evaluate_along(I: Expr | Sequence[Expr], traj: Trajectory, params: Mapping[str, complex] | None = None) -> np.ndarray:
    exprs = [I] if isinstance(I, Expr) else list(I)
    vals = lambdify_numpy(exprs, params)(*traj.columns())
    return vals[0] if isinstance(I, Expr) else vals


def drift(I: Expr, traj: Trajectory, params: Mapping[str, complex] | None = None) -> float:
    """max_t |I(t) - I(0)| / max(1, |I(0)|)."""
    vals = evaluate_along(I, traj, params)
    i0 = vals[0]
    return float(np.max(np.abs(vals - i0)) / max(1.0, abs(i0)))
