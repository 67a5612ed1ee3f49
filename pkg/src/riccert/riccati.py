"""The second-order Riccati equation

    y'' + 3 a y y' + b y' + a^2 y^3 + c y^2 + d y + e = 0

and the scalar functionals used by the comparison theorems.

All functionals accept scalar or array ``t`` (and broadcastable state
arguments) so they can be evaluated point-wise or on whole grids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateError, SpanMismatchError
from .expr import Expr, as_expr, differentiate, evaluate
from .ode import Trajectory, sample
from .quadrature import assert_nonvanishing, cumulative_simpson, refined_extreme, uniform_grid

__all__ = [
    "RiccatiCoefficients", "DiscriminantMode", "CoefficientValues",
    "assemble_field", "equation_residual", "nu", "gamma", "jfun", "gamma_min",
    "disc_D", "mismatch_L", "identity_residual", "IdentityResidual",
    "constant_witness", "witness_margin", "inequality_lhs", "ratio",
]


class DiscriminantMode(str, enum.Enum):
    PAPER_LITERAL = "paper"
    CORRECTED = "corrected"


class CoefficientValues(NamedTuple):
    a: object
    b: object
    c: object
    d: object
    e: object
    da: object
    db: object


@dataclass(frozen=True)
class RiccatiCoefficients:
    a: Expr
    b: Expr
    c: Expr
    d: Expr
    e: Expr
    da: Expr = field(init=False, compare=False, repr=False)
    db: Expr = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        for name in "abcde":
            object.__setattr__(self, name, as_expr(getattr(self, name)))
        object.__setattr__(self, "da", differentiate(self.a))
        object.__setattr__(self, "db", differentiate(self.b))

    @classmethod
    def of(cls, a=0.0, b=0.0, c=0.0, d=0.0, e=0.0) -> "RiccatiCoefficients":
        """Build from Exprs, numbers or formula strings."""
        return cls(as_expr(a), as_expr(b), as_expr(c), as_expr(d), as_expr(e))

    def replace(self, **changes) -> "RiccatiCoefficients":
        parts = {k: getattr(self, k) for k in "abcde"}
        parts.update({k: as_expr(v) for k, v in changes.items()})
        return RiccatiCoefficients(**parts)

    def values(self, t) -> CoefficientValues:
        return CoefficientValues(*(evaluate(getattr(self, k), t)
                                   for k in ("a", "b", "c", "d", "e", "da", "db")))

    def formulas(self) -> dict:
        return {k: str(getattr(self, k)) for k in "abcde"}


def assemble_field(co: RiccatiCoefficients):
    """First-order field on ``(y, y')``."""
    fa, fb, fc, fd, fe = (getattr(co, k)._scalar_fn for k in "abcde")

    def field_(t, state):
        y, v = state[0], state[1]
        a = fa(t)
        return np.array((v, -(3.0 * a * y * v + fb(t) * v + a * a * y * y * y
                              + fc(t) * y * y + fd(t) * y + fe(t))))

    return field_


def equation_residual(co: RiccatiCoefficients, t, y, dy, ddy):
    a, b, c, d, e, _, _ = co.values(t)
    return ddy + 3 * a * y * dy + b * dy + a * a * y ** 3 + c * y ** 2 + d * y + e


def inequality_lhs(co: RiccatiCoefficients, t, eta, deta=0.0, ddeta=0.0):
    """Left side of the upper/lower differential inequality, leading term read as eta''."""
    return equation_residual(co, t, eta, deta, ddeta)


def nu(co: RiccatiCoefficients, t, u, v, u1, v1):
    a = evaluate(co.a, t)
    b = evaluate(co.b, t)
    # fixed evaluation order keeps nu(u,v,..) == -nu(v,u,..) bit-for-bit
    return (u1 - v1) + 1.5 * a * (u * u - v * v) + b * (u - v)


def gamma(co: RiccatiCoefficients, t, u, v):
    a, _, c, d, _, da, db = co.values(t)
    return a * a * (u * u + u * v + v * v) + (c - 1.5 * da) * (u + v) - db + d


def jfun(co: RiccatiCoefficients, t, u, v):
    return (u - v) * gamma(co, t, u, v)


def gamma_min(co: RiccatiCoefficients, t):
    """Stationary point ``u0 = v0`` and global minimum of Gamma(t, ., .)."""
    a, _, c, d, _, da, db = co.values(t)
    a2 = a * a
    if np.any(a2 == 0.0):
        raise DegenerateError("gamma_min requires a(t) != 0")
    k = 3.0 * da - 2.0 * c
    return k / (6.0 * a2), (d - db) - k * k / (12.0 * a2)


def disc_D(co: RiccatiCoefficients, t, mode: DiscriminantMode = DiscriminantMode.CORRECTED):
    a, _, c, d, _, da, db = co.values(t)
    k = 2.0 * c - 3.0 * da
    if DiscriminantMode(mode) is DiscriminantMode.PAPER_LITERAL:
        return 2.0 * k * k + a * a * (d - db)
    return 12.0 * a * a * (d - db) - k * k


def mismatch_L(co_base: RiccatiCoefficients, co_other: RiccatiCoefficients, t, u, v):
    a, b, c, d, e, _, _ = co_base.values(t)
    a1, b1, c1, d1, e1, _, _ = co_other.values(t)
    return (3.0 * (a1 - a) * u * v + (b1 - b) * v + (a1 * a1 - a * a) * u ** 3
            + (c1 - c) * u ** 2 + (d1 - d) * u + (e1 - e))


@dataclass(frozen=True)
class IdentityResidual:
    t: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.t, self.values)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _mesh_grid(traj0: Trajectory, traj1: Trajectory, t1: float, t_end: float, sub: int, floor: int):
    """Union of both integrator meshes on ``[t1, t_end]``, each step split ``sub`` times."""
    mesh = np.union1d(traj0.t, traj1.t)
    mesh = np.union1d(mesh[(mesh > t1) & (mesh < t_end)], [t1, t_end])
    frac = np.linspace(0.0, 1.0, sub + 1)[:-1]
    t = np.concatenate([(mesh[:-1, None] + np.diff(mesh)[:, None] * frac).ravel(), [t_end]])
    if t.size < floor:
        t = np.union1d(t, uniform_grid((t1, t_end), floor))
    return t


def identity_residual(co, co1, traj0: Trajectory, traj1: Trajectory, t1: float, *,
                      n: Optional[int] = None, literal: bool = False) -> IdentityResidual:
    """Residual of the integrated difference identity along two solutions.

    ``traj0`` solves the base equation (``co``), ``traj1`` the comparison one
    (``co1``); both carry ``(y, y')`` states. The sound form is

        nu(t) - nu(t1) + int_{t1}^{t} J(s, y0, y1) ds - int_{t1}^{t} L(s, y1, y1') ds = 0.

    ``literal=True`` evaluates the expression as typeset instead, with
    ``nu(t)`` and ``-int J``; it does not vanish in general.

    With ``n`` unset the quadrature grid follows the integrators' step
    sizes (8 points per step, at least 2001 overall), so steep stretches
    are resolved as finely as the solutions themselves. An explicit ``n``
    gives a uniform grid.
    """
    if not (traj0.t_start <= t1 and traj1.t_start <= t1):
        raise SpanMismatchError("both trajectories must start at or before t1")
    t_end = min(traj0.t_end, traj1.t_end)
    if not t_end > t1:
        raise SpanMismatchError("trajectories share no interval to the right of t1")
    if n is None:
        t = _mesh_grid(traj0, traj1, t1, t_end, 8, 2001)
    else:
        t = uniform_grid((t1, t_end), n + (n % 2 == 0))
    s0, s1 = sample(traj0, t), sample(traj1, t)
    y0, dy0, y1, dy1 = s0[:, 0], s0[:, 1], s1[:, 0], s1[:, 1]
    nu_t = nu(co, t, y0, y1, dy0, dy1)
    int_j = cumulative_simpson(jfun(co, t, y0, y1), t)
    int_l = cumulative_simpson(mismatch_L(co, co1, t, y1, dy1), t)
    if literal:
        a, b = evaluate(co.a, t), evaluate(co.b, t)
        lhs = (dy0 - dy1) + (1.5 * a * (y0 + y1) + b) * (y0 - y1)
        res = lhs - nu_t - int_j - int_l
    else:
        res = nu_t - nu_t[0] + int_j - int_l
    return IdentityResidual(t, res)


def ratio(co: RiccatiCoefficients, t):
    a, _, c, d, e, _, _ = co.values(t)
    return (np.abs(c) + np.abs(d) + np.abs(e)) / (a * a)


def constant_witness(co: RiccatiCoefficients, span, lam: float = 0.0, side: str = "upper",
                     grid_n: int = 2001) -> float:
    """``lam + max ratio`` (upper) or ``-lam - max ratio`` (lower) over ``span``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    assert_nonvanishing(lambda t: evaluate(co.a, t), span, grid_n, "a(t)")
    m, _ = refined_extreme(lambda t: ratio(co, t), span, grid_n, mode="max")
    return lam + m if side == "upper" else -lam - m


def witness_margin(co: RiccatiCoefficients, eta: float, span, side: str = "upper",
                   grid_n: int = 2001):
    """Worst-case value of the inequality's left side for a constant witness.

    For ``side='upper'`` the inequality demands ``>= 0`` (returned as is); for
    ``'lower'`` it demands ``<= 0`` and the sign is flipped, so a
    non-negative result always means the witness is valid on the grid.
    """
    sign = 1.0 if side == "upper" else -1.0
    return refined_extreme(lambda t: sign * inequality_lhs(co, t, eta), span, grid_n, mode="min")

