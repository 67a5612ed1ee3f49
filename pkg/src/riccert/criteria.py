"""Grid evaluation of theorem hypotheses and certificate assembly.

Every hypothesis becomes a :class:`GridEvidence`: a margin function sampled
on a uniform grid whose minimum must be non-negative (up to a tolerance).
Running-integral hypotheses ("for all t in the span") are sampled at every
grid point of the cumulative quadrature.

Supported theorem identifiers:

``L2.1``
    ``Gamma >= 0`` from ``a != 0`` and ``D >= 0``.
``T3.1`` / ``T3.2``
    One-sided comparison with a user-supplied comparison solution and a
    constant witness (upper / lower).
``T3.3``
    Two-sided comparison between two user-supplied solutions.
``T4.1`` .. ``T4.4``
    Global solvability with the bound ``M`` (or the partition maxima ``M_n``).
``T4.5``
    Global solvability between the roots ``rho_-`` and ``rho_+``.
``T5.1``
    Non-oscillation of a 3x3 linear system through its Riccati reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (DegenerateError, DomainError, MissingComparisonError, NonDifferentiableError,
                     PreconditionError, UnsupportedTheoremError)
from .expr import Expr, Func, as_expr, differentiate, evaluate
from .ode import Trajectory, sample
from .quadrature import cumulative_simpson, nested_running_integral, refined_extreme, uniform_grid
from .riccati import (DiscriminantMode, RiccatiCoefficients, constant_witness, disc_D,
                      equation_residual, mismatch_L, nu, ratio, witness_margin)
from .transform import LinearSystem3, eliminate_a13, reduce_system3

__all__ = [
    "GridEvidence", "Certificate", "AdmissibleRegion", "NuConstraint", "Conclusion",
    "Curve", "Comparison", "Problem", "THEOREMS", "AMBIGUOUS",
    "check_sign_conditions", "sup_ratio", "partition_ratios", "check_integral_condition",
    "rho_conditions", "certify", "certify_nonoscillation", "default_partition",
    "region_nonempty_evidence",
]

THEOREMS = ("L2.1", "T3.1", "T3.2", "T3.3", "T4.1", "T4.2", "T4.3", "T4.4", "T4.5", "T5.1")
CERTIFIED, REFUTED, INCONCLUSIVE = "certified", "refuted", "inconclusive"
DEFAULT_GRID = 2001
DEFAULT_TOL = 1e-9

# Hypotheses whose printed form is internally inconsistent; the certificate
# metadata names the reading that was used.
AMBIGUOUS = {
    "T3.3": "upper comparison integral read as <= 0 (printed >= 0 contradicts the root-based criterion)",
    "T4.2": "integral condition evaluated as the mirror of T4.1 (weight -3/2 M a + b, sign >= 0); "
            "the printed variant is recorded alongside",
    "T4.4": "a(t) < 0 required as printed",
    "T4.5": "integrands include the b rho' term required for rho to solve the comparison equation",
}


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


@dataclass(frozen=True)
class GridEvidence:
    name: str
    span: tuple
    grid_n: int
    min_margin: float
    argmin: float
    tolerance: float = DEFAULT_TOL
    strict: bool = False
    first_violation: Optional[float] = None

    @property
    def passed(self) -> bool:
        """``min_margin >= -tolerance`` (``> 0`` for strict conditions)."""
        if self.strict:
            return self.min_margin > 0.0
        return self.min_margin >= -self.tolerance

    @property
    def refutes(self) -> bool:
        return self.min_margin < -10.0 * self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name, "span": [float(self.span[0]), float(self.span[1])],
            "grid_n": int(self.grid_n), "min_margin": _finite(self.min_margin),
            "argmin": _finite(self.argmin), "pass": self.passed, "strict": self.strict,
            "tolerance": self.tolerance,
            "first_violation": None if self.first_violation is None else float(self.first_violation),
        }


def _first_violation(t, margins, tol, strict):
    """First grid point with a genuinely negative margin (zeros only as a fallback)."""
    bad = margins < -tol
    if strict and not np.any(bad):
        bad = margins <= 0.0
    if not np.any(bad):
        return None
    i = int(np.flatnonzero(bad)[0])
    return float(t[i])


def _evidence_from_samples(name, span, t, margins, tol, strict=False) -> GridEvidence:
    margins = np.broadcast_to(np.asarray(margins, dtype=float), np.shape(t))
    i = int(np.argmin(margins))
    return GridEvidence(name, (float(span[0]), float(span[1])), len(t), float(margins[i]),
                        float(t[i]), tol, strict, _first_violation(t, margins, tol, strict))


def _evidence_from_fn(name, fn, span, grid_n, tol, strict=False) -> GridEvidence:
    """Grid minimum of ``fn`` plus one local refinement pass."""
    t = uniform_grid(span, grid_n)
    margins = np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape)
    value, where = refined_extreme(lambda s: np.broadcast_to(fn(s), np.shape(s)), span, grid_n, mode="min")
    first = _first_violation(t, margins, tol, strict)
    if first is not None:
        first = _refine_crossing(fn, t, margins, first, tol, strict)
    return GridEvidence(name, (float(span[0]), float(span[1])), grid_n, value, where, tol, strict, first)


def _refine_crossing(fn, t, margins, t_bad, tol, strict):
    """Bisect the sign change just before the first violating grid point."""
    i = int(np.searchsorted(t, t_bad))
    if i == 0:
        return t_bad
    lo, hi = float(t[i - 1]), float(t[i])
    if margins[i] >= -tol:
        return t_bad
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        ok = float(fn(np.array([mid]))[0]) >= -tol
        lo, hi = (mid, hi) if ok else (lo, mid)
    return hi


def _failed(name, span, grid_n, tol) -> GridEvidence:
    return GridEvidence(name, (float(span[0]), float(span[1])), grid_n, -math.inf,
                        float(span[0]), tol, False, float(span[0]))


# ---------------------------------------------------------------------------
# comparison curves and admissible regions


class Curve:
    """A function of ``t`` with a derivative: a closed form or a trajectory."""

    def __init__(self, source: Union[Expr, str, float, Trajectory]):
        self.source = source
        if isinstance(source, Trajectory):
            self.label = f"trajectory[{source.t_start}, {source.t_end}]"
        else:
            self.source = as_expr(source)
            self.label = str(self.source)
            self._d = differentiate(self.source)

    @property
    def is_trajectory(self) -> bool:
        return isinstance(self.source, Trajectory)

    def value(self, t):
        if self.is_trajectory:
            return sample(self.source, t)[..., 0]
        return np.broadcast_to(evaluate(self.source, t), np.shape(t)) * 1.0

    def deriv(self, t):
        if self.is_trajectory:
            return sample(self.source, t)[..., 1]
        return np.broadcast_to(evaluate(self._d, t), np.shape(t)) * 1.0

    def second(self, t):
        return np.broadcast_to(evaluate(differentiate(self._d), t), np.shape(t)) * 1.0

    def __repr__(self):
        return f"Curve({self.label})"


@dataclass(frozen=True)
class Comparison:
    """A solution of a neighbouring equation with coefficients ``coefficients``."""

    coefficients: RiccatiCoefficients
    solution: Curve

    @classmethod
    def of(cls, coefficients, solution) -> "Comparison":
        sol = solution if isinstance(solution, Curve) else Curve(solution)
        return cls(coefficients, sol)


Spec = Union[str, float, tuple]  # 'y' | 'dy' | constant | (Curve, 0|1)


def _resolve(spec, t, y, dy):
    if isinstance(spec, str):
        return y if spec == "y" else dy
    if isinstance(spec, tuple):
        curve, order = spec
        return curve.value(t) if order == 0 else curve.deriv(t)
    if callable(spec):
        return spec(t)
    return spec


def _describe(spec):
    if isinstance(spec, str):
        return spec
    if isinstance(spec, tuple):
        curve, order = spec
        return curve.label if order == 0 else f"d/dt[{curve.label}]"
    if callable(spec):
        return getattr(spec, "label", "<curve>")
    return float(spec)


@dataclass(frozen=True)
class NuConstraint:
    """``sign * nu(t, u, v, u1, v1) >= 0`` (``> 0`` when strict)."""

    u: Spec
    v: Spec
    u1: Spec
    v1: Spec
    sign: int  # +1 for ">= 0", -1 for "<= 0"
    strict: bool = False

    def value(self, co, t, y, dy):
        args = [_resolve(s, t, y, dy) for s in (self.u, self.v, self.u1, self.v1)]
        return self.sign * nu(co, t, *args)

    def to_dict(self) -> dict:
        rel = (">" if self.strict else ">=") if self.sign > 0 else ("<" if self.strict else "<=")
        return {"args": [_describe(s) for s in (self.u, self.v, self.u1, self.v1)], "relation": f"{rel} 0"}


@dataclass(frozen=True)
class AdmissibleRegion:
    """Initial data ``(y(t0), y'(t0))`` covered by a theorem's conclusion."""

    co: RiccatiCoefficients = field(repr=False, compare=False)
    t0: float
    y_lo: float
    y_hi: float
    constraints: tuple

    def dy_bounds(self, y0: float):
        """Interval of admissible ``y'(t0)`` for a given ``y0`` (``nu`` is affine in it)."""
        lo, hi = -math.inf, math.inf
        for c in self.constraints:
            k = (1.0 if c.u1 == "dy" else 0.0) - (1.0 if c.v1 == "dy" else 0.0)
            k *= c.sign
            n0 = float(c.value(self.co, self.t0, y0, 0.0))
            if k > 0:
                lo = max(lo, -n0 / k)
            elif k < 0:
                hi = min(hi, n0 / -k)
            elif n0 < 0:
                return (math.nan, math.nan)
        return lo, hi

    def contains(self, y0: float, dy0: float, slack: float = 0.0) -> bool:
        if not (self.y_lo - slack <= y0 <= self.y_hi + slack):
            return False
        return all(float(c.value(self.co, self.t0, y0, dy0)) >= -slack for c in self.constraints)

    def to_dict(self) -> dict:
        return {"t0": float(self.t0), "y_range": [float(self.y_lo), float(self.y_hi)],
                "constraints": [c.to_dict() for c in self.constraints]}


@dataclass(frozen=True)
class Conclusion:
    """What a certified theorem asserts along every admissible solution."""

    lower: Callable
    upper: Callable
    nu_signs: tuple
    lower_label: str
    upper_label: str
    horizon: float

    def to_dict(self) -> dict:
        return {"bounds": [self.lower_label, self.upper_label], "horizon": float(self.horizon),
                "nu_signs": [c.to_dict() for c in self.nu_signs]}


@dataclass
class Problem:
    """A certification target.

    ``kind`` is ``"riccati"`` (``coefficients`` set) or ``"system3"``
    (``system`` set). ``comparisons`` maps ``"y1"``/``"y2"`` to
    :class:`Comparison` objects for the comparison theorems.
    """

    kind: str
    span: tuple
    coefficients: Optional[RiccatiCoefficients] = None
    system: Optional[LinearSystem3] = None
    partition: Optional[Sequence[float]] = None
    comparisons: dict = field(default_factory=dict)

    @classmethod
    def riccati(cls, co, span, **kw) -> "Problem":
        return cls("riccati", tuple(map(float, span)), coefficients=co, **kw)

    @classmethod
    def system3(cls, sys, span, **kw) -> "Problem":
        return cls("system3", tuple(map(float, span)), system=sys, **kw)


@dataclass
class Certificate:
    theorem: str
    evidences: list
    constants: dict
    region: Optional[AdmissibleRegion]
    conclusion: Optional[Conclusion]
    metadata: dict
    problem: Optional[Problem] = field(default=None, repr=False)
    coefficients: Optional[RiccatiCoefficients] = field(default=None, repr=False)
    reduced_system: Optional[LinearSystem3] = field(default=None, repr=False)

    @property
    def verdict(self) -> str:
        if all(ev.passed for ev in self.evidences):
            return CERTIFIED
        if any(ev.refutes for ev in self.evidences):
            return REFUTED
        return INCONCLUSIVE

    def evidence(self, name: str) -> GridEvidence:
        for ev in self.evidences:
            if ev.name == name:
                return ev
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "verdict": self.verdict,
            "evidences": [ev.to_dict() for ev in self.evidences],
            "constants": _jsonable(self.constants),
            "admissible_region": None if self.region is None else self.region.to_dict(),
            "conclusion": None if self.conclusion is None else self.conclusion.to_dict(),
            "metadata": _jsonable(self.metadata),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite(obj)
    return str(obj)


# ---------------------------------------------------------------------------
# individual conditions


def _D_margin(co, mode):
    return lambda t: np.broadcast_to(disc_D(co, t, mode), np.shape(t)) * 1.0


def check_sign_conditions(co: RiccatiCoefficients, span, grid_n: int = DEFAULT_GRID, *,
                          tol: float = DEFAULT_TOL, d_mode=DiscriminantMode.CORRECTED,
                          a_sign: int = 1, condition4: bool = False) -> list:
    """Evidence for ``a_sign * a > 0`` and ``D >= 0``.

    With ``condition4=True`` the branch rule is used instead: where ``a``
    vanishes, ``c = 3/2 a'`` and ``d >= b'`` are required; elsewhere ``D >= 0``.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    out = []
    if not condition4:
        name = "a_positive" if a_sign > 0 else "a_negative"
        out.append(_evidence_from_fn(
            name, lambda t: a_sign * np.broadcast_to(evaluate(co.a, t), np.shape(t)), span, grid_n, tol,
            strict=True))
        out.append(_evidence_from_fn("D_nonnegative", _D_margin(co, d_mode), span, grid_n, tol))
        return out

    def branch(t):
        a, _, c, d, _, da, db = (np.broadcast_to(v, np.shape(t)) for v in co.values(t))
        zero = np.abs(a) <= tol
        dm = np.broadcast_to(disc_D(co, t, d_mode), np.shape(t))
        alt = np.minimum(-np.abs(c - 1.5 * da), d - db)
        return np.where(zero, alt, dm)

    out.append(_evidence_from_fn("condition_4", branch, span, grid_n, tol))
    return out


def sup_ratio(co: RiccatiCoefficients, span, grid_n: int = DEFAULT_GRID) -> float:
    """``max (|c| + |d| + |e|) / a^2`` on the span (grid plus refinement)."""
    t = uniform_grid(span, grid_n)
    a = np.broadcast_to(evaluate(co.a, t), t.shape)
    if np.any(a == 0.0):
        raise DegenerateError(f"a(t) vanishes near t={t[np.flatnonzero(a == 0.0)[0]]:.6g}")
    return refined_extreme(lambda s: np.broadcast_to(ratio(co, s), np.shape(s)), span, grid_n, mode="max")[0]


def default_partition(span, pieces: int = 10) -> list:
    return list(np.linspace(span[0], span[1], pieces + 1))


def partition_ratios(co: RiccatiCoefficients, partition: Sequence[float], grid_n: int = DEFAULT_GRID) -> list:
    """``M_n`` = ratio maximum over ``[t_0, t_n]``, ``n = 1..N`` (nondecreasing)."""
    pts = [float(p) for p in partition]
    if len(pts) < 2 or any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValueError("partition must be strictly increasing with at least two points")
    per = max(101, grid_n // (len(pts) - 1))
    local = [sup_ratio(co, (lo, hi), per) for lo, hi in zip(pts, pts[1:])]
    return list(np.maximum.accumulate(local))


def check_integral_condition(weight, inner, t, sign: int, *, offset: float = 0.0,
                             name: str = "integral_condition", tol: float = DEFAULT_TOL) -> GridEvidence:
    """Evidence that ``offset + int exp(int weight) (int inner)`` has the sign ``sign`` for all t.

    ``weight`` and ``inner`` are samples on the uniform grid ``t``; ``sign=+1``
    demands ``>= 0`` and ``sign=-1`` demands ``<= 0``.
    """
    running = offset + nested_running_integral(weight, inner, t)
    return _evidence_from_samples(name, (t[0], t[-1]), t, sign * running, tol)


def _sampled(e, t):
    return np.broadcast_to(evaluate(e, t), np.shape(t)) * 1.0


def rho_conditions(co: RiccatiCoefficients, span, grid_n: int = DEFAULT_GRID, *, tol: float = DEFAULT_TOL):
    """Roots ``rho_-``, ``rho_+`` of ``c r^2 + d r + e`` and the evidence they need.

    Returns ``(rho_minus, rho_plus, evidences)``; the roots are ``None`` when
    the discriminant or ``c`` condition fails (they would not be real or finite).
    """
    disc = co.d * co.d - 4 * co.c * co.e
    evs = [
        _evidence_from_fn("c_nonzero", lambda t: np.abs(_sampled(co.c, t)), span, grid_n, tol, strict=True),
        _evidence_from_fn("discriminant_positive", lambda t: _sampled(disc, t), span, grid_n, tol, strict=True),
    ]
    if not all(ev.passed for ev in evs):
        return None, None, evs
    root = Func("sqrt", disc)
    rho_m = (-co.d - root) / (2 * co.c)
    rho_p = (-co.d + root) / (2 * co.c)
    try:
        d1m, d1p = differentiate(rho_m), differentiate(rho_p)
        d2m, d2p = differentiate(d1m), differentiate(d1p)
    except NonDifferentiableError:
        evs.append(_failed("rho_C2", span, grid_n, tol))
        return rho_m, rho_p, evs
    evs.append(_evidence_from_fn("rho_order", lambda t: _sampled(rho_p, t) - _sampled(rho_m, t),
                                 span, grid_n, tol, strict=True))
    t = uniform_grid(span, grid_n)
    a, b = _sampled(co.a, t), _sampled(co.b, t)
    for nm, rho, d1, d2, sgn in (("rho_minus_integral", rho_m, d1m, d2m, -1),
                                 ("rho_plus_integral", rho_p, d1p, d2p, 1)):
        r, r1, r2 = _sampled(rho, t), _sampled(d1, t), _sampled(d2, t)
        integrand = r2 + 3 * a * r * r1 + a * a * r ** 3 + b * r1
        evs.append(_evidence_from_samples(nm, span, t, sgn * cumulative_simpson(integrand, t), tol))
    return rho_m, rho_p, evs


# ---------------------------------------------------------------------------
# theorem assembly


def _params(params):
    p = dict(params or {})
    p.setdefault("grid_n", DEFAULT_GRID)
    p.setdefault("tol", DEFAULT_TOL)
    p["d_mode"] = DiscriminantMode(p.get("d_mode", DiscriminantMode.CORRECTED))
    return p


def _nested_margin(co, co1, curve, witness, span, grid_n, gamma, sign, tol, name):
    t = uniform_grid(span, grid_n)
    a, b = _sampled(co.a, t), _sampled(co.b, t)
    y1, dy1 = curve.value(t), curve.deriv(t)
    weight = 1.5 * a * (witness + y1) + b
    inner = mismatch_L(co, co1, t, y1, dy1)
    return check_integral_condition(weight, inner, t, sign, offset=gamma - float(y1[0]), name=name, tol=tol)


def _comparison_residual(comp: Comparison, span, grid_n, tol, name):
    if comp.solution.is_trajectory:
        return None
    t = uniform_grid(span, grid_n)
    c = comp.solution
    res = equation_residual(comp.coefficients, t, c.value(t), c.deriv(t), c.second(t))
    res_tol = 1e-8 * (1.0 + float(np.max(np.abs(c.value(t)))))
    return _evidence_from_samples(name, span, t, -np.abs(np.broadcast_to(res, t.shape)), res_tol)


def _running_L_sign(co, comp, span, grid_n, sign, tol, name):
    t = uniform_grid(span, grid_n)
    L = mismatch_L(co, comp.coefficients, t, comp.solution.value(t), comp.solution.deriv(t))
    return _evidence_from_samples(name, span, t, sign * cumulative_simpson(np.broadcast_to(L, t.shape), t), tol)


def _need(problem, key):
    comp = problem.comparisons.get(key)
    if comp is None:
        raise MissingComparisonError(f"theorem needs comparison solution {key!r}")
    return comp


def _lemma21(problem, p):
    co, span = problem.coefficients, problem.span
    evs = [_evidence_from_fn("a_nonzero", lambda t: np.abs(_sampled(co.a, t)), span, p["grid_n"], p["tol"],
                             strict=True),
           _evidence_from_fn("D_nonnegative", _D_margin(co, p["d_mode"]), span, p["grid_n"], p["tol"])]
    return evs, {}, None, None, {}


def _theorem31(problem, p, upper=True):
    co, span, g, tol = problem.coefficients, problem.span, p["grid_n"], p["tol"]
    comp = _need(problem, "y1")
    t0 = span[0]
    y1_0 = float(comp.solution.value(np.array([t0]))[0])
    lam = float(p.get("lam", 0.0))
    side = "upper" if upper else "lower"
    w = float(p["eta" if upper else "zeta"]) if ("eta" if upper else "zeta") in p else \
        constant_witness(co, span, lam, side, g)
    gamma = float(p.get("gamma", y1_0))
    evs = check_sign_conditions(co, span, g, tol=tol, d_mode=p["d_mode"])
    sgn = 1 if upper else -1
    evs.append(_nested_margin(co, comp.coefficients, comp.solution, w, span, g, gamma, sgn, tol,
                              "comparison_integral"))
    order = (w - gamma) if upper else (gamma - w)
    evs.append(GridEvidence("witness_order", span, 1, order, t0, tol))
    wm, wt = witness_margin(co, w, span, side, g)
    evs.append(GridEvidence("witness_inequality", span, g, wm, wt, tol))
    res = _comparison_residual(comp, span, g, tol, "comparison_solution")
    if res is not None:
        evs.append(res)
    L_ev = _running_L_sign(co, comp, span, g, sgn, tol, "running_L")
    y1 = comp.solution
    curve_y1, curve_dy1 = (y1, 0), (y1, 1)
    if upper:
        region = AdmissibleRegion(co, t0, gamma, w, (
            NuConstraint(w, "y", 0.0, "dy", 1, strict=True),
            NuConstraint("y", curve_y1, "dy", curve_dy1, 1)))
        nus = [NuConstraint(w, "y", 0.0, "dy", 1)]
        if L_ev.passed:
            nus.append(NuConstraint("y", curve_y1, "dy", curve_dy1, 1))
        concl = Conclusion(y1.value, lambda t: np.full(np.shape(t), w), tuple(nus), y1.label, repr(w), span[1])
    else:
        region = AdmissibleRegion(co, t0, w, gamma, (
            NuConstraint(w, "y", 0.0, "dy", -1, strict=True),
            NuConstraint("y", curve_y1, "dy", curve_dy1, -1)))
        nus = [NuConstraint(w, "y", 0.0, "dy", -1)]
        if L_ev.passed:
            nus.append(NuConstraint("y", curve_y1, "dy", curve_dy1, -1))
        concl = Conclusion(lambda t: np.full(np.shape(t), w), y1.value, tuple(nus), repr(w), y1.label, span[1])
    consts = {"gamma": gamma, "witness": w, "running_L_sign_holds": L_ev.passed}
    return evs, consts, region, concl, {}


def _theorem33(problem, p):
    co, span, g, tol = problem.coefficients, problem.span, p["grid_n"], p["tol"]
    c1, c2 = _need(problem, "y1"), _need(problem, "y2")
    evs = check_sign_conditions(co, span, g, tol=tol, d_mode=p["d_mode"], condition4=True)
    evs.append(_running_L_sign(co, c1, span, g, 1, tol, "lower_running_L"))
    evs.append(_running_L_sign(co, c2, span, g, -1, tol, "upper_running_L"))
    t = uniform_grid(span, g)
    evs.append(_evidence_from_samples("comparison_order", span, t,
                                      c2.solution.value(t) - c1.solution.value(t), tol, strict=True))
    for key, comp in (("y1", c1), ("y2", c2)):
        res = _comparison_residual(comp, span, g, tol, f"comparison_solution_{key}")
        if res is not None:
            evs.append(res)
    printed = _running_L_sign(co, c2, span, g, 1, tol, "upper_running_L_printed")
    s1, s2 = c1.solution, c2.solution
    t0 = span[0]
    region = AdmissibleRegion(co, t0, float(s1.value(np.array([t0]))[0]), float(s2.value(np.array([t0]))[0]), (
        NuConstraint("y", (s1, 0), "dy", (s1, 1), 1),
        NuConstraint("y", (s2, 0), "dy", (s2, 1), -1)))
    concl = Conclusion(s1.value, s2.value, region.constraints, s1.label, s2.label, span[1])
    meta = {"printed_upper_integral_margin": printed.min_margin}
    return evs, {}, region, concl, meta


def _theorem41(problem, p, upper=True):
    co, span, g, tol = problem.coefficients, problem.span, p["grid_n"], p["tol"]
    evs = check_sign_conditions(co, span, g, tol=tol, d_mode=p["d_mode"])
    try:
        M = sup_ratio(co, span, g)
        evs.append(GridEvidence("ratio_bounded", span, g, 1.0, span[0], tol))
    except (DegenerateError, DomainError):
        evs.append(_failed("ratio_bounded", span, g, tol))
        return evs, {}, None, None, {}
    t = uniform_grid(span, g)
    a, b, e = _sampled(co.a, t), _sampled(co.b, t), _sampled(co.e, t)
    meta = {}
    if upper:
        evs.append(check_integral_condition(1.5 * M * a + b, e, t, -1, name="forcing_integral", tol=tol))
        lo, hi = 0.0, M
        region = AdmissibleRegion(co, span[0], 0.0, M, (NuConstraint(M, "y", 0.0, "dy", 1),
                                                     NuConstraint(0.0, "y", 0.0, "dy", -1)))
    else:
        evs.append(check_integral_condition(-1.5 * M * a + b, e, t, 1, name="forcing_integral", tol=tol))
        printed = check_integral_condition(1.5 * M * a + b, e, t, -1, name="forcing_integral_printed", tol=tol)
        meta["printed_variant_margin"] = printed.min_margin
        meta["printed_variant_pass"] = printed.passed
        lo, hi = -M, 0.0
        region = AdmissibleRegion(co, span[0], -M, 0.0, (NuConstraint(-M, "y", 0.0, "dy", -1),
                                                      NuConstraint(0.0, "y", 0.0, "dy", 1)))
    wm, wt = witness_margin(co, M if upper else -M, span, "upper" if upper else "lower", g)
    meta["witness_margin"] = wm
    meta["witness_margin_t"] = wt
    concl = Conclusion(lambda s: np.full(np.shape(s), lo), lambda s: np.full(np.shape(s), hi),
                       region.constraints, repr(lo), repr(hi), span[1])
    return evs, {"M": M}, region, concl, meta


def _step_curve(partition, values):
    pts = np.asarray(partition, dtype=float)
    vals = np.asarray(values, dtype=float)

    def fn(t):
        idx = np.clip(np.searchsorted(pts, t, side="left") - 1, 0, len(vals) - 1)
        return vals[idx]

    return fn


def _theorem43(problem, p, upper=True):
    co, span, g, tol = problem.coefficients, problem.span, p["grid_n"], p["tol"]
    partition = list(p.get("partition") or problem.partition or default_partition(span))
    partition[0], partition[-1] = span[0], span[1]
    evs = check_sign_conditions(co, span, g, tol=tol, d_mode=p["d_mode"], a_sign=1 if upper else -1)
    try:
        Mn = partition_ratios(co, partition, g)
    except (DegenerateError, DomainError):
        evs.append(_failed("ratio_bounded", span, g, tol))
        return evs, {}, None, None, {}
    per = max(101, g // (len(partition) - 1)) | 1
    worst = None
    for n, (lo, hi) in enumerate(zip(partition, partition[1:])):
        t = uniform_grid((lo, hi), per)
        a, b, e = _sampled(co.a, t), _sampled(co.b, t), _sampled(co.e, t)
        if upper:
            ev = check_integral_condition(1.5 * a * Mn[n] + b, e, t, -1, name="forcing_integral", tol=tol)
        else:
            ev = check_integral_condition(-(1.5 * a * Mn[n] + b), e, t, 1, name="forcing_integral", tol=tol)
        if worst is None or ev.min_margin < worst.min_margin:
            worst = ev
    evs.append(GridEvidence("forcing_integral", span, per * (len(partition) - 1), worst.min_margin,
                            worst.argmin, tol, False, worst.first_violation))
    M1 = Mn[0]
    step = _step_curve(partition, Mn)
    if upper:
        region = AdmissibleRegion(co, span[0], 0.0, M1, (NuConstraint("y", M1, "dy", 0.0, -1),
                                                      NuConstraint("y", 0.0, "dy", 0.0, 1)))
        step.label = "M_n"
        concl = Conclusion(lambda s: np.zeros(np.shape(s)), step,
                           (NuConstraint("y", step, "dy", 0.0, -1), NuConstraint("y", 0.0, "dy", 0.0, 1)),
                           "0", "M_n", span[1])
    else:
        neg = _step_curve(partition, [-m for m in Mn])
        neg.label = "-M_n"
        region = AdmissibleRegion(co, span[0], -M1, 0.0, (NuConstraint("y", 0.0, "dy", 0.0, -1),
                                                       NuConstraint(-M1, "y", 0.0, "dy", -1)))
        concl = Conclusion(neg, lambda s: np.zeros(np.shape(s)),
                           (NuConstraint("y", 0.0, "dy", 0.0, -1), NuConstraint(neg, "y", 0.0, "dy", -1)),
                           "-M_n", "0", span[1])
    return evs, {"M_n": Mn, "partition": partition}, region, concl, {}


def _theorem45(problem, p):
    co, span, g, tol = problem.coefficients, problem.span, p["grid_n"], p["tol"]
    evs = check_sign_conditions(co, span, g, tol=tol, d_mode=p["d_mode"], condition4=True)
    rho_m, rho_p, rev = rho_conditions(co, span, g, tol=tol)
    evs.extend(rev)
    if rho_m is None:
        return evs, {}, None, None, {}
    cm, cp = Curve(rho_m), Curve(rho_p)
    t0 = span[0]
    ts = uniform_grid(span, 11)
    consts = {"rho_minus": str(rho_m), "rho_plus": str(rho_p),
              "rho_minus_samples": list(cm.value(ts)), "rho_plus_samples": list(cp.value(ts)),
              "rho_sample_t": list(ts)}
    nus = (NuConstraint("y", (cm, 0), "dy", (cm, 1), 1), NuConstraint("y", (cp, 0), "dy", (cp, 1), -1))
    region = AdmissibleRegion(co, t0, float(cm.value(np.array([t0]))[0]), float(cp.value(np.array([t0]))[0]), nus)
    concl = Conclusion(cm.value, cp.value, nus, cm.label, cp.label, span[1])
    return evs, consts, region, concl, {}


_DISPATCH = {
    "L2.1": _lemma21,
    "T3.1": lambda pr, p: _theorem31(pr, p, True),
    "T3.2": lambda pr, p: _theorem31(pr, p, False),
    "T3.3": _theorem33,
    "T4.1": lambda pr, p: _theorem41(pr, p, True),
    "T4.2": lambda pr, p: _theorem41(pr, p, False),
    "T4.3": lambda pr, p: _theorem43(pr, p, True),
    "T4.4": lambda pr, p: _theorem43(pr, p, False),
    "T4.5": _theorem45,
}


def certify(problem: Problem, theorem_id: str, params: Optional[dict] = None) -> Certificate:
    """Check every hypothesis of ``theorem_id`` for ``problem``.

    ``params`` may carry ``grid_n``, ``tol``, ``d_mode`` and theorem-specific
    values (``gamma``, ``eta``/``zeta``, ``lam``, ``partition``, ``strategies``).
    """
    if theorem_id not in THEOREMS:
        raise UnsupportedTheoremError(theorem_id)
    p = _params(params)
    if theorem_id == "T5.1":
        if problem.kind != "system3":
            raise PreconditionError("problem_kind", "T5.1 applies to 3x3 linear systems")
        return certify_nonoscillation(problem.system, problem.span, p.get("strategies"), p)
    if problem.kind != "riccati":
        raise PreconditionError("problem_kind", f"{theorem_id} applies to Riccati problems")
    evs, consts, region, concl, meta = _DISPATCH[theorem_id](problem, p)
    meta = dict(meta)
    meta.update({"d_mode": p["d_mode"].value, "grid_n": p["grid_n"], "tolerance": p["tol"],
                 "span": list(problem.span), "coefficients": problem.coefficients.formulas()})
    if theorem_id in AMBIGUOUS:
        meta["paper_text_ambiguous"] = AMBIGUOUS[theorem_id]
    return Certificate(theorem_id, evs, consts, region, concl, meta, problem, problem.coefficients)


def region_nonempty_evidence(region: Optional[AdmissibleRegion], span, tol: float = DEFAULT_TOL,
                              n: int = 201) -> GridEvidence:
    """Largest admissible ``y'(t0)`` interval width over a grid of ``y(t0)`` values."""
    if region is None:
        return _failed("admissible_region_nonempty", span, n, tol)
    ys = np.linspace(region.y_lo, region.y_hi, n)
    widths = []
    for y0 in ys:
        lo, hi = region.dy_bounds(float(y0))
        widths.append(hi - lo if not (math.isnan(lo) or math.isnan(hi)) else -math.inf)
    k = int(np.argmax(widths))
    return GridEvidence("admissible_region_nonempty", (float(span[0]), float(span[1])), n,
                        float(widths[k]), float(ys[k]), tol)


def certify_nonoscillation(sys: LinearSystem3, span, strategies=None, params=None) -> Certificate:
    """Reduce ``sys`` to a Riccati equation and try the global criteria in order."""
    p = _params(params)
    strategies = list(strategies or ("T4.1", "T4.2", "T4.3", "T4.4", "T4.5"))
    span = tuple(map(float, span))
    eliminated = eliminate_a13(sys, span, p["grid_n"])
    co = reduce_system3(eliminated, span, p["grid_n"])
    sub = Problem.riccati(co, span, partition=p.get("partition"))
    tried = {}
    last = None
    for sid in strategies:
        if sid not in _DISPATCH or not sid.startswith("T4"):
            raise UnsupportedTheoremError(sid)
        cert = certify(sub, sid, {k: v for k, v in p.items() if k != "strategies"})
        # non-oscillation needs one admissible solution, not a vacuous region
        cert.evidences.append(region_nonempty_evidence(cert.region, span, p["tol"]))
        tried[sid] = cert.verdict
        last = cert
        if cert.verdict == CERTIFIED:
            break
    meta = dict(last.metadata)
    meta.update({"criterion": last.theorem if last.verdict == CERTIFIED else None,
                 "strategies": tried, "system": sys.formulas(),
                 "eliminated_a13": eliminated is not sys})
    evs = list(last.evidences)
    if last.verdict != CERTIFIED:
        # a failed sufficient criterion says nothing about oscillation
        evs = [GridEvidence("criterion_satisfied", span, 1, 0.0, span[0], p["tol"], strict=True)]
    cert = Certificate("T5.1", evs, dict(last.constants), last.region, last.conclusion, meta,
                       Problem.system3(sys, span), co, eliminated)
    cert.metadata["reduced_system"] = eliminated.formulas()
    cert.constants["reduced_coefficients"] = co.formulas()
    return cert
