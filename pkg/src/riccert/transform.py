"""Exact reductions between linear systems and the second-order Riccati equation.

Two directions are covered:

* A Riccati equation is embedded in the canonical system
  ``phi' = a psi, psi' = X chi, chi' = Y phi + Z psi + W chi`` through
  ``psi = y phi``.
* A general 3x3 linear system with a vanishing (1,3) entry is reduced to a
  Riccati equation with coefficients ``(a12, A, C, F, E)``.

Exponentials (``X`` and the lifted ``phi``) are never integrated by
quadrature: the running exponent is appended to the ODE state so the
adaptive integrator controls its error.

Substituting ``psi = y phi`` into the canonical system gives

    y'' + 3a y y' - (X'/X + W) y' + a^2 y^3 + (a' - a(X'/X + W)) y^2 - XZ y - XY = 0,

so a Riccati equation is representable only when ``c = a' + a b``. The
canonical coefficients then follow from ``X'/X = a'/(2a) - c/(2a) - b/2``,
``W = -b - X'/X``, ``Y = -e/X`` and ``Z = -d/X``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateError, NonDifferentiableError, PreconditionError
from .expr import Expr, as_expr, differentiate, evaluate
from .ode import Trajectory, integrate, sample
from .quadrature import assert_nonvanishing, uniform_grid
from .riccati import RiccatiCoefficients, assemble_field

__all__ = [
    "LinearSystem3", "CanonicalSystem", "LiftedTrajectory",
    "riccati_to_canonical", "is_representable", "representability_gap",
    "lift_riccati_solution", "reduce_system3", "eliminate_a13", "lift_sys3_solution",
    "canonical_residual", "system3_residual", "canonical_initial_state",
]

_KEYS = tuple(f"a{j}{k}" for j in (1, 2, 3) for k in (1, 2, 3))


@dataclass(frozen=True)
class LinearSystem3:
    """Coefficient matrix ``m[j][k]`` of ``(phi, psi, chi)' = m(t) (phi, psi, chi)``."""

    m: tuple

    def __post_init__(self):
        rows = tuple(tuple(as_expr(x) for x in row) for row in self.m)
        if len(rows) != 3 or any(len(r) != 3 for r in rows):
            raise ValueError("a LinearSystem3 needs a 3x3 matrix")
        object.__setattr__(self, "m", rows)

    @classmethod
    def from_dict(cls, entries: dict) -> "LinearSystem3":
        """Entries keyed ``a11`` .. ``a33``; missing keys default to 0."""
        unknown = set(entries) - set(_KEYS)
        if unknown:
            raise KeyError(f"unknown system entries: {sorted(unknown)}")
        return cls(tuple(tuple(entries.get(f"a{j}{k}", 0.0) for k in (1, 2, 3))
                         for j in (1, 2, 3)))

    @classmethod
    def companion(cls, p=0.0, q=0.0) -> "LinearSystem3":
        """System form of ``phi''' + p phi' + q phi = 0``."""
        return cls.from_dict({"a12": 1.0, "a23": 1.0, "a31": -as_expr(q), "a32": -as_expr(p)})

    def entry(self, j: int, k: int) -> Expr:
        return self.m[j - 1][k - 1]

    def formulas(self) -> dict:
        return {f"a{j}{k}": str(self.entry(j, k)) for j in (1, 2, 3) for k in (1, 2, 3)}

    def matrix(self, t) -> np.ndarray:
        return np.array([[evaluate(x, t) for x in row] for row in self.m], dtype=float)

    def field(self):
        fns = [[x._scalar_fn for x in row] for row in self.m]

        def field_(t, state):
            return np.array([sum(fns[j][k](t) * state[k] for k in range(3)) for j in range(3)])

        return field_


@dataclass(frozen=True)
class LiftedTrajectory:
    """``(phi, psi, chi)`` recovered from an augmented integration.

    ``base`` holds the augmented states; ``mapper(t, states)`` turns an
    ``(m, k)`` block of them into an ``(m, 3)`` block of triples.
    """

    base: Trajectory
    mapper: Callable

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        out = self.mapper(tq, sample(self.base, tq))
        return out[0] if scalar else out

    def riccati_state(self, t):
        """Underlying ``(y, y')`` samples."""
        return sample(self.base, t)[..., :2]

    @property
    def t(self):
        return self.base.t

    @property
    def status(self):
        return self.base.status

    @property
    def t_start(self):
        return self.base.t_start

    @property
    def t_end(self):
        return self.base.t_end


@dataclass(frozen=True)
class CanonicalSystem:
    a: Expr
    rate: Expr          # X'/X
    W: Expr
    d: Expr
    e: Expr
    t0: float

    def X(self, t, *, rtol=1e-12, atol=1e-14):
        """``X(t) = exp(int_{t0}^{t} rate)`` via a scalar integration."""
        return np.exp(self.log_X(t, rtol=rtol, atol=atol))

    def log_X(self, t, *, rtol=1e-12, atol=1e-14):
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = min(self.t0, tq.min()), max(self.t0, tq.max())
        rate = self.rate._scalar_fn
        out = np.zeros_like(tq)
        if hi > self.t0:
            tr = integrate(lambda s, _: np.array([rate(s)]), [0.0], (self.t0, hi), rtol, atol)
            right = tq > self.t0
            out[right] = sample(tr, tq[right])[:, 0]
        if lo < self.t0:
            # integrate the reversed variable so the span stays increasing
            tr = integrate(lambda s, _: np.array([-rate(self.t0 - s)]), [0.0],
                           (0.0, self.t0 - lo), rtol, atol)
            left = tq < self.t0
            out[left] = sample(tr, self.t0 - tq[left])[:, 0]
        return out[0] if np.ndim(t) == 0 else out

    def augmented_field(self):
        """Field on ``(phi, psi, chi, s)`` with ``X = exp(s)``."""
        fa, fr, fw, fd, fe = (x._scalar_fn for x in (self.a, self.rate, self.W, self.d, self.e))

        def field_(t, state):
            phi, psi, chi, s = state
            x = np.exp(s)
            return np.array((fa(t) * psi, x * chi,
                             -fe(t) / x * phi - fd(t) / x * psi + fw(t) * chi, fr(t)))

        return field_

    def solve(self, state0, span, rtol=1e-10, atol=1e-12, **kw) -> Trajectory:
        """Integrate from ``(phi, psi, chi)`` given at ``span[0]``."""
        s0 = self.log_X(span[0])
        return integrate(self.augmented_field(), [*state0, s0], span, rtol, atol, **kw)


def representability_gap(co: RiccatiCoefficients) -> Expr:
    """``c - a' - a b``; the equation has a canonical form iff this vanishes."""
    return co.c - co.da - co.a * co.b


def is_representable(co: RiccatiCoefficients, span, grid_n: int = 2001, tol: float = 1e-10) -> bool:
    t = uniform_grid(span, grid_n)
    gap = np.abs(np.broadcast_to(evaluate(representability_gap(co), t), t.shape))
    return bool(np.max(gap) <= tol)


def riccati_to_canonical(co: RiccatiCoefficients, t0: float, span=None, *,
                         grid_n: int = 2001, tol: float = 1e-10) -> CanonicalSystem:
    span = (t0, t0 + 1.0) if span is None else span
    assert_nonvanishing(lambda t: evaluate(co.a, t), span, grid_n, "a(t)")
    if not is_representable(co, span, grid_n, tol):
        raise PreconditionError(
            "canonical_representability",
            "the substitution psi = y phi only produces equations with c = a' + a b")
    rate = co.da / (2 * co.a) - co.c / (2 * co.a) - co.b / 2
    return CanonicalSystem(co.a, rate, -co.b - rate, co.d, co.e, float(t0))


def _check_phi1(phi1):
    if phi1 == 0 or not np.isfinite(phi1):
        raise PreconditionError("phi1_nonzero", "the initial value of phi must be a nonzero real")


def canonical_initial_state(canon: CanonicalSystem, t1, y1, dy1, phi1=1.0):
    """``(phi, psi, chi)`` at ``t1`` matching the Riccati data ``(y1, y1')``."""
    _check_phi1(phi1)
    x = canon.X(t1)
    a = evaluate(canon.a, t1)
    return np.array((phi1, y1 * phi1, (dy1 + a * y1 * y1) * phi1 / x))


def lift_riccati_solution(co: RiccatiCoefficients, ytraj: Trajectory, t1: float, phi1: float,
                          *, t0: Optional[float] = None, t2: Optional[float] = None) -> LiftedTrajectory:
    """Lift a Riccati solution to the canonical system.

    The state ``(y, y', F, s)`` is re-integrated from ``ytraj(t1)`` with
    ``F' = a y`` and ``s' = X'/X``; then ``phi = phi1 exp(F)``,
    ``psi = y phi`` and ``chi = (y' + a y^2) phi / X``.
    """
    _check_phi1(phi1)
    t0 = ytraj.t_start if t0 is None else t0
    t2 = ytraj.t_end if t2 is None else t2
    canon = riccati_to_canonical(co, t0, (min(t0, t1), t2))
    ric = assemble_field(co)
    fa, fr = co.a._scalar_fn, canon.rate._scalar_fn

    def field_(t, state):
        y = state[0]
        dy, dv = ric(t, state[:2])
        return np.array((dy, dv, fa(t) * y, fr(t)))

    y1, v1 = sample(ytraj, t1)
    base = integrate(field_, [y1, v1, 0.0, canon.log_X(t1)], (t1, t2), ytraj.rtol, ytraj.atol,
                     escape_threshold=ytraj.escape_threshold)

    def mapper(t, st):
        y, v, f, s = st.T
        phi = phi1 * np.exp(f)
        a = evaluate(co.a, t)
        return np.column_stack((phi, y * phi, (v + a * y * y) * phi / np.exp(s)))

    return LiftedTrajectory(base, mapper)


def canonical_residual(co: RiccatiCoefficients, lifted: LiftedTrajectory, t) -> np.ndarray:
    """Residual of the third canonical equation along a lifted triple.

    The first two equations hold by construction; the third one is checked
    with analytic derivatives, ``y''`` coming from the Riccati field.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    st = sample(lifted.base, t)
    y, v, f, s = st.T
    canon = riccati_to_canonical(co, lifted.t_start, (lifted.t_start, lifted.t_end))
    ric = assemble_field(co)
    dv = np.array([ric(ti, np.array((yi, vi)))[1] for ti, yi, vi in zip(t, y, v)])
    phi, psi, chi = lifted.mapper(t, st).T
    a, da = evaluate(co.a, t), evaluate(co.da, t)
    x, rate, w = np.exp(s), evaluate(canon.rate, t), evaluate(canon.W, t)
    g = v + a * y * y
    dchi = ((dv + da * y * y + 2 * a * y * v) * phi + g * a * y * phi - g * phi * rate) / x
    rhs = -evaluate(co.e, t) / x * phi - evaluate(co.d, t) / x * psi + w * chi
    return dchi - rhs


def _c1_check(e: Expr, name: str, span, grid_n: int):
    if e.contains_abs():
        raise PreconditionError("c1_coefficients", f"{name} contains abs and is not known to be C1")
    try:
        d = differentiate(e)
    except NonDifferentiableError as exc:
        raise PreconditionError("c1_coefficients", f"{name}: {exc}") from exc
    t = uniform_grid(span, grid_n)
    vals = np.broadcast_to(evaluate(d, t), t.shape)
    if not np.all(np.isfinite(vals)):
        raise PreconditionError("c1_coefficients", f"derivative of {name} is not finite on the span")
    return d


def reduce_system3(sys: LinearSystem3, span, grid_n: int = 2001, tol: float = 1e-12) -> RiccatiCoefficients:
    """Riccati coefficients ``(a12, A, C, F, E)`` of a system with ``a13 = 0``.

    Expanding the elimination of ``chi`` yields

        A = 2a11 - a22 - a33 - a23'/a23
        C = a12 (2a11 - a22 - a33) + a23 (a12/a23)'
        F = B' + (a11 - a33 - a23'/a23) B - a12 a21 - a23 a32,    B = a11 - a22
        E = (a33 - a11) a21 - a23 a31 - a23 (a21/a23)'
    """
    t = uniform_grid(span, grid_n)
    a13 = np.broadcast_to(evaluate(sys.entry(1, 3), t), t.shape)
    if np.max(np.abs(a13)) > tol:
        raise PreconditionError("a13_zero", "entry a13 must vanish identically on the span "
                                "(use eliminate_a13 first)")
    try:
        assert_nonvanishing(lambda s: evaluate(sys.entry(2, 3), s), span, grid_n, "a23(t)")
    except DegenerateError as exc:
        raise PreconditionError("a23_nonvanishing", str(exc)) from exc
    a11, a12, _ = sys.m[0]
    a21, a22, a23 = sys.m[1]
    a31, a32, a33 = sys.m[2]
    B = a11 - a22
    dB = _c1_check(B, "a11 - a22", span, grid_n)
    _c1_check(a12, "a12", span, grid_n)
    da23 = _c1_check(a23, "a23", span, grid_n)
    k = da23 / a23
    s = 2 * a11 - a22 - a33
    A = s - k
    C = a12 * s + a23 * differentiate(a12 / a23)
    F = dB + (a11 - a33 - k) * B - a12 * a21 - a23 * a32
    E = (a33 - a11) * a21 - a23 * a31 - a23 * differentiate(a21 / a23)
    return RiccatiCoefficients(a12, A, C, F, E)


def eliminate_a13(sys: LinearSystem3, span=None, grid_n: int = 2001) -> LinearSystem3:
    """Change variables ``psi = eta - lam chi`` with ``lam = a13/a12``.

    In ``(phi, eta, chi)`` the matrix becomes

        [a11,            a12,            0                                   ]
        [a21 + lam a31,  a22 + lam a32,  a23 - lam a22 + lam' + lam a33 - lam^2 a32]
        [a31,            a32,            a33 - lam a32                       ]
    """
    a11, a12, a13 = sys.m[0]
    a21, a22, a23 = sys.m[1]
    a31, a32, a33 = sys.m[2]
    if a13.is_constant and evaluate(a13, 0.0) == 0.0:
        return sys
    if span is not None:
        assert_nonvanishing(lambda s: evaluate(a12, s), span, grid_n, "a12(t)")
    elif a12.is_constant and evaluate(a12, 0.0) == 0.0:
        raise DegenerateError("a12 vanishes identically")
    lam = a13 / a12
    dlam = differentiate(lam)
    return LinearSystem3((
        (a11, a12, 0.0),
        (a21 + lam * a31, a22 + lam * a32, a23 - lam * a22 + dlam + lam * a33 - lam * lam * a32),
        (a31, a32, a33 - lam * a32),
    ))


def lift_sys3_solution(sys: LinearSystem3, co: RiccatiCoefficients, ytraj: Trajectory,
                       t1: float, phi1: float, t2: Optional[float] = None) -> LiftedTrajectory:
    """Recover ``(phi, psi, chi)`` of the linear system from a Riccati solution.

    ``phi = phi1 exp(int (a11 + a12 y))``, ``psi = y phi`` and
    ``chi = (y' + a12 y^2 + B y - a21) phi / a23``.
    """
    _check_phi1(phi1)
    t2 = ytraj.t_end if t2 is None else t2
    ric = assemble_field(co)
    f11, f12 = sys.entry(1, 1)._scalar_fn, sys.entry(1, 2)._scalar_fn

    def field_(t, state):
        dy, dv = ric(t, state[:2])
        return np.array((dy, dv, f11(t) + f12(t) * state[0]))

    y1, v1 = sample(ytraj, t1)
    base = integrate(field_, [y1, v1, 0.0], (t1, t2), ytraj.rtol, ytraj.atol,
                     escape_threshold=ytraj.escape_threshold)

    def mapper(t, st):
        y, v, f = st.T
        phi = phi1 * np.exp(f)
        a12, a21, a23 = (evaluate(sys.entry(*jk), t) for jk in ((1, 2), (2, 1), (2, 3)))
        B = evaluate(sys.entry(1, 1) - sys.entry(2, 2), t)
        return np.column_stack((phi, y * phi, (v + a12 * y * y + B * y - a21) * phi / a23))

    return LiftedTrajectory(base, mapper)


def _system_derivative_expr(sys: LinearSystem3):
    """Time derivatives of the entries needed by :func:`system3_residual`."""
    B = sys.entry(1, 1) - sys.entry(2, 2)
    return (differentiate(sys.entry(1, 2)), differentiate(B),
            differentiate(sys.entry(2, 1)), differentiate(sys.entry(2, 3)))


def system3_residual(sys: LinearSystem3, co: RiccatiCoefficients, lifted: LiftedTrajectory, t):
    """Residual of the third system equation along a lifted triple.

    The derivative of ``chi`` is formed analytically from the lift formula,
    with ``y''`` taken from the reduced Riccati field, so a wrong reduction
    coefficient shows up here.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    st = sample(lifted.base, t)
    y, v, _ = st.T
    ric = assemble_field(co)
    dv = np.array([ric(ti, np.array((yi, vi)))[1] for ti, yi, vi in zip(t, y, v)])
    phi, psi, chi = lifted.mapper(t, st).T
    ev = {f"{j}{k}": evaluate(sys.entry(j, k), t) for j in (1, 2, 3) for k in (1, 2, 3)}
    d12, dB, d21, d23 = (evaluate(x, t) for x in _system_derivative_expr(sys))
    B = ev["11"] - ev["22"]
    g = v + ev["12"] * y * y + B * y - ev["21"]
    dg = dv + d12 * y * y + 2 * ev["12"] * y * v + dB * y + B * v - d21
    dphi = (ev["11"] + ev["12"] * y) * phi
    dchi = (dg * phi + g * dphi) / ev["23"] - g * phi * d23 / ev["23"] ** 2
    rhs = ev["31"] * phi + ev["32"] * psi + ev["33"] * chi
    return dchi - rhs
