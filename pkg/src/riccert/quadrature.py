"""Grid utilities: running Simpson integrals and refined grid extrema."""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_simpson as _cumulative_simpson

from .errors import DegenerateError, DomainError


def uniform_grid(span, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(float(span[0]), float(span[1]), int(n))


def cumulative_simpson(values, t) -> np.ndarray:
    """Running integral from ``t[0]`` at every grid point (composite Simpson)."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (values[1:] + values[:-1]))])
    return _cumulative_simpson(values, x=t, initial=0.0)


def nested_running_integral(weight, inner, t) -> np.ndarray:
    """``I(t) = int_{t0}^{t} exp(int_{t0}^{tau} weight) * (int_{t0}^{tau} inner) dtau``.

    ``weight`` and ``inner`` are sampled on the uniform grid ``t``; the inner
    running integrals are computed once and reused for the outer one.
    """
    log_factor = cumulative_simpson(weight, t)
    inner_run = cumulative_simpson(inner, t)
    return cumulative_simpson(np.exp(log_factor) * inner_run, t)


def refined_extreme(fn, span, n: int, *, mode: str = "min", factor: int = 10):
    """Extreme value of ``fn`` on a uniform grid plus one local refinement.

    The refinement resamples the two cells around the grid argmin/argmax with
    ``factor`` times the density. Returns ``(value, t_at_value)``.
    """
    t = uniform_grid(span, n)
    vals = np.asarray(fn(t), dtype=float)
    pick = np.argmin if mode == "min" else np.argmax
    i = int(pick(vals))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    best_v, best_t = float(vals[i]), float(t[i])
    if hi > lo:
        tf = np.linspace(lo, hi, 2 * factor + 1)
        vf = np.asarray(fn(tf), dtype=float)
        j = int(pick(vf))
        better = vf[j] < best_v if mode == "min" else vf[j] > best_v
        if better:
            best_v, best_t = float(vf[j]), float(tf[j])
    return best_v, best_t


def assert_nonvanishing(fn, span, n: int, name: str) -> float:
    """Raise :class:`DegenerateError` if ``fn`` vanishes or changes sign on the grid.

    Returns the minimum absolute value observed.
    """
    t = uniform_grid(span, n)
    try:
        vals = np.asarray(fn(t), dtype=float)
    except DomainError as exc:
        raise DegenerateError(f"{name} is not evaluable on the span ({exc})") from exc
    if np.any(vals == 0.0) or np.any(np.sign(vals[1:]) != np.sign(vals[:-1])):
        bad = t[np.flatnonzero((vals == 0.0) | np.r_[False, np.sign(vals[1:]) != np.sign(vals[:-1])])[0]]
        raise DegenerateError(f"{name} vanishes on the span near t={bad:.6g}")
    return float(np.min(np.abs(vals)))
