"""Dormand-Prince 5(4) integrator with dense output and escape classification.

The integrator distinguishes three outcomes:

* ``completed``: the right end of the span was reached;
* ``escaped``: the state norm exceeded ``escape_threshold``, or the step size
  underflowed ``h_min`` while the norm was growing monotonically over the last
  five accepted steps (finite-time blow-up);
* ``stalled``: the step size underflowed without norm growth, or the step
  budget ran out (a tolerance/stiffness failure, not a blow-up).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import OutOfRangeError

__all__ = ["Trajectory", "EscapeReport", "integrate", "sample", "detect_escape",
           "COMPLETED", "ESCAPED", "STALLED"]

COMPLETED, ESCAPED, STALLED = "completed", "escaped", "stalled"

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order weights minus embedded fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Hairer, Norsett & Wanner, dense output of order 4)
_D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])

Field = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray                 # (K+1,) strictly increasing mesh
    y: np.ndarray                 # (K+1, n) states at the mesh
    coeffs: np.ndarray            # (K, 5, n) dense-output coefficients per step
    status: str
    rtol: float
    atol: float
    t_request: float              # requested right end
    escape_threshold: float
    message: str = ""
    n_rejected: int = 0
    norms: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def t_est(self) -> Optional[float]:
        return self.t_end if self.status == ESCAPED else None

    def __call__(self, t):
        return sample(self, t)

    def covers(self, t0: float, t1: float) -> bool:
        return self.t_start <= t0 and t1 <= self.t_end


@dataclass(frozen=True)
class EscapeReport:
    t_est: float
    norm_at_last_step: float
    classification: str  # finite_escape | horizon_reached | stalled


def _initial_step(f, t0, y0, f0, direction, order, rtol, atol, span_len):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span_len)
    y1 = y0 + h0 * direction * f0
    f1 = f(t0 + h0 * direction, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if not np.isfinite(d2):
        return h0 * 1e-3
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / (order + 1))
    return min(100 * h0, h1, span_len)


def _step(f, t, y, k1, h):
    k = np.empty((7, y.size))
    k[0] = k1
    for s in range(1, 7):
        dy = np.dot(_A[s], k[:s]) if s > 0 else 0.0
        k[s] = f(t + _C[s] * h, y + h * dy)
    y_new = y + h * np.dot(_B[:6], k[:6])
    err = h * np.dot(_E, k)
    return y_new, err, k


def _dense_coeffs(y, y_new, k, h):
    ydiff = y_new - y
    bspl = h * k[0] - ydiff
    return np.stack([
        y,
        ydiff,
        bspl,
        ydiff - h * k[6] - bspl,
        h * np.dot(_D, k),
    ])


def integrate(field: Field, y0, span, rtol: float = 1e-8, atol: float = 1e-10, *,
              h0: Optional[float] = None, h_max: Optional[float] = None,
              h_min: Optional[float] = None, escape_threshold: float = 1e8,
              max_steps: int = 500_000, fixed_step: Optional[float] = None) -> Trajectory:
    """Integrate ``y' = field(t, y)`` over ``span = (t_a, t_b)``.

    ``fixed_step`` disables error control (used for order tests); otherwise
    the local error of each accepted step satisfies
    ``rms(err / (atol + rtol*max(|y|, |y_new|))) <= 1``.
    """
    t_a, t_b = float(span[0]), float(span[1])
    if not t_b > t_a:
        raise ValueError("span must satisfy t_a < t_b")
    if rtol <= 0 or atol <= 0:
        raise ValueError("rtol and atol must be positive")
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()

    def f(t, state):
        return np.asarray(field(t, state), dtype=float).reshape(y.shape)

    span_len = t_b - t_a
    h_min = 1e-12 * span_len if h_min is None else h_min
    h_max = span_len if h_max is None else h_max

    ts, ys, cs, norms = [t_a], [y.copy()], [], [float(np.linalg.norm(y))]
    t = t_a
    k1 = f(t, y)
    if fixed_step is not None:
        h = fixed_step
    elif h0 is not None:
        h = h0
    else:
        h = _initial_step(f, t, y, k1, 1.0, 5, rtol, atol, span_len)
    h = min(h, h_max)
    rejected = 0

    def finish(st, msg=""):
        return Trajectory(np.array(ts), np.array(ys), np.array(cs).reshape(len(cs), 5, y.size),
                          st, rtol, atol, t_b, escape_threshold, msg, rejected, np.array(norms))

    if norms[0] > escape_threshold:
        return finish(ESCAPED, "initial state beyond escape threshold")

    for _ in range(max_steps):
        if t >= t_b:
            return finish(COMPLETED)
        last = t + h >= t_b or (t_b - (t + h)) < 1e-12 * span_len
        if last:
            h = t_b - t
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, err, k = _step(f, t, y, k1, h)
        finite = np.all(np.isfinite(y_new)) and np.all(np.isfinite(k))
        if fixed_step is not None:
            if not finite:
                return finish(ESCAPED, "non-finite state under fixed step")
            err_norm = 0.0
        elif finite:
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        else:
            err_norm = np.inf

        if err_norm <= 1.0:
            t_new = t_b if last else t + h
            cs.append(_dense_coeffs(y, y_new, k, h))
            t, y, k1 = t_new, y_new, k[6]
            ts.append(t)
            ys.append(y.copy())
            norms.append(float(np.linalg.norm(y)))
            if norms[-1] > escape_threshold:
                return finish(ESCAPED, "state norm exceeded escape threshold")
            if fixed_step is None:
                fac = 10.0 if err_norm == 0 else min(10.0, max(0.2, 0.9 * err_norm ** -0.2))
                h = min(h * fac, h_max)
        else:
            rejected += 1
            fac = 0.2 if not np.isfinite(err_norm) else max(0.2, 0.9 * err_norm ** -0.2)
            h = h * fac
            if h < h_min:
                tail = norms[-6:]
                growing = len(tail) >= 6 and all(b > a for a, b in zip(tail, tail[1:]))
                if growing:
                    return finish(ESCAPED, "step size underflow with growing norm")
                return finish(STALLED, "step size underflow without norm growth")
    return finish(STALLED, "step budget exhausted")


def sample(traj: Trajectory, t):
    """Dense-output state at ``t`` (scalar -> (n,), array -> (m, n))."""
    scalar = np.ndim(t) == 0
    tq = np.atleast_1d(np.asarray(t, dtype=float))
    mesh = traj.t
    if np.any(tq < mesh[0]) or np.any(tq > mesh[-1]):
        raise OutOfRangeError(
            f"t outside covered span [{mesh[0]}, {mesh[-1]}]")
    out = np.empty((tq.size, traj.dim))
    idx = np.searchsorted(mesh, tq, side="right") - 1
    on_mesh = mesh[np.clip(idx, 0, len(mesh) - 1)] == tq
    out[on_mesh] = traj.y[idx[on_mesh]]
    off = ~on_mesh
    if np.any(off):
        i = idx[off]
        h = mesh[i + 1] - mesh[i]
        s = ((tq[off] - mesh[i]) / h)[:, None]
        s1 = 1.0 - s
        r = traj.coeffs[i]
        out[off] = r[:, 0] + s * (r[:, 1] + s1 * (r[:, 2] + s * (r[:, 3] + s1 * r[:, 4])))
    return out[0] if scalar else out


def detect_escape(traj: Trajectory, horizon: float) -> EscapeReport:
    norm = float(traj.norms[-1])
    if traj.status == COMPLETED:
        return EscapeReport(min(traj.t_end, horizon), norm, "horizon_reached")
    if traj.status == STALLED:
        return EscapeReport(min(traj.t_end, horizon), norm, "stalled")
    tail = traj.norms[-5:]
    monotone = len(tail) == 5 and bool(np.all(np.diff(tail) > 0))
    cls = "finite_escape" if monotone else "stalled"
    return EscapeReport(min(traj.t_end, horizon), norm, cls)
