"""Empirical validation of certificates plus brute-force oracles.

A certificate only says that hypotheses hold on a grid. The harness
integrates the equation from admissible initial data and checks that the
theorem's conclusions actually hold along the computed solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .criteria import CERTIFIED, Certificate
from .errors import EmptyRegionError, InadmissibleError, OutOfRangeError, StalledError
from .expr import evaluate
from .ode import COMPLETED, ESCAPED, STALLED, Trajectory, integrate, sample
from .quadrature import cumulative_simpson, uniform_grid
from .riccati import RiccatiCoefficients, assemble_field, disc_D, nu, witness_margin
from .transform import lift_sys3_solution

__all__ = [
    "ICOutcome", "VerificationReport", "LemmaReport", "sample_admissible_ics", "verify_conclusion",
    "brute_force_gamma_min", "verify_lemma_23_24", "verify_lemma_22", "slack_for",
]

SEED = 20240611


def slack_for(rtol: float) -> float:
    """Absolute slack used for every asserted inequality."""
    return 1e-6 + 10.0 * rtol


# ---------------------------------------------------------------------------
# initial conditions


def _nudge_inside(region, y0, dy0, lo, hi):
    """Move ``dy0`` toward the interval midpoint until every constraint holds exactly."""
    mid = 0.5 * (lo + hi) if math.isfinite(lo) and math.isfinite(hi) else dy0
    for _ in range(60):
        vals = [float(c.value(region.co, region.t0, y0, dy0)) for c in region.constraints]
        ok = all(v > 0 if c.strict else v >= 0 for v, c in zip(vals, region.constraints))
        if ok:
            return dy0
        dy0 = 0.5 * (dy0 + mid) if dy0 != mid else np.nextafter(dy0, hi)
    return None


def sample_admissible_ics(cert: Certificate, count: int, *, seed: int = SEED, max_tries: int = 50):
    """``count`` deterministic ``(y0, dy0)`` pairs from the certificate's admissible region.

    A scrambled Halton sequence (fixed seed) drives ``y0`` across its range
    and ``dy0`` across the ``nu``-derived interval for that ``y0``.
    """
    if cert.verdict != CERTIFIED:
        raise EmptyRegionError(f"certificate is {cert.verdict}; no admissible region is asserted")
    region = cert.region
    if region is None:
        raise EmptyRegionError("certificate carries no admissible region")
    engine = qmc.Halton(d=2, scramble=True, seed=seed)
    out = []
    for _ in range(max_tries):
        for u, w in engine.random(count):
            y0 = region.y_lo + (region.y_hi - region.y_lo) * u
            lo, hi = region.dy_bounds(y0)
            if not (lo <= hi):
                continue
            lo_f = lo if math.isfinite(lo) else (hi - 1.0 if math.isfinite(hi) else -1.0)
            hi_f = hi if math.isfinite(hi) else lo_f + 1.0
            dy0 = _nudge_inside(region, y0, lo_f + (hi_f - lo_f) * w, lo_f, hi_f)
            if dy0 is not None:
                out.append((float(y0), float(dy0)))
            if len(out) == count:
                return out
    if not out:
        raise EmptyRegionError("no admissible initial condition found")
    raise EmptyRegionError(f"only {len(out)} of {count} admissible initial conditions found")


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class ICOutcome:
    index: int
    y0: float
    dy0: float
    kind: str                  # bounds_held | bounds_violated | escaped | stalled | phi_vanished
    margin: float              # minimum bound margin (or phi minimum for T5.1)
    t_at: float                # where the margin is attained / escape time
    nu_margins: tuple = ()
    admissible: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def held(self) -> bool:
        return self.kind == "bounds_held"

    def to_dict(self) -> dict:
        return {"index": self.index, "y0": self.y0, "dy0": self.dy0, "kind": self.kind,
                "margin": self.margin, "t_at": self.t_at, "nu_margins": list(self.nu_margins),
                "admissible": self.admissible,
                "extra": {k: self.extra[k] for k in sorted(self.extra)}}


@dataclass(frozen=True)
class VerificationReport:
    theorem: str
    certificate_verdict: str
    horizon: float
    slack: float
    outcomes: tuple

    @property
    def admissible_outcomes(self):
        return tuple(o for o in self.outcomes if o.admissible)

    @property
    def passed(self) -> bool:
        """Every admissible IC kept its bounds and every nu sign."""
        adm = self.admissible_outcomes
        return bool(adm) and all(o.held and all(m >= -self.slack for m in o.nu_margins) for o in adm)

    @property
    def stalled(self) -> bool:
        return any(o.kind == STALLED for o in self.admissible_outcomes)

    @property
    def min_margin(self) -> float:
        adm = self.admissible_outcomes
        return min((o.margin for o in adm), default=math.nan)

    @property
    def min_nu_margin(self) -> float:
        vals = [m for o in self.admissible_outcomes for m in o.nu_margins]
        return min(vals, default=math.inf)

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "certificate_verdict": self.certificate_verdict,
                "horizon": self.horizon, "slack": self.slack, "pass": self.passed,
                "min_margin": self.min_margin, "min_nu_margin": self.min_nu_margin,
                "outcomes": [o.to_dict() for o in self.outcomes]}


def _check_grid(traj: Trajectory, t0, t1, n=4001):
    t = np.union1d(uniform_grid((t0, t1), n), traj.t[(traj.t >= t0) & (traj.t <= t1)])
    return t


def _riccati_outcome(i, cert, y0, dy0, horizon, rtol, atol, slack, admissible):
    co = cert.coefficients
    concl = cert.conclusion
    t0 = cert.region.t0
    traj = integrate(assemble_field(co), [y0, dy0], (t0, horizon), rtol, atol)
    if traj.status == ESCAPED:
        return ICOutcome(i, y0, dy0, "escaped", -math.inf, traj.t_end, (), admissible), traj
    if traj.status == STALLED:
        return ICOutcome(i, y0, dy0, "stalled", math.nan, traj.t_end, (), admissible), traj
    t = _check_grid(traj, t0, horizon)
    st = sample(traj, t)
    y, dy = st[:, 0], st[:, 1]
    margins = np.minimum(y - concl.lower(t), concl.upper(t) - y)
    j = int(np.argmin(margins))
    nus = tuple(float(np.min(c.value(co, t, y, dy))) for c in concl.nu_signs)
    kind = "bounds_held" if margins[j] >= -slack else "bounds_violated"
    return ICOutcome(i, y0, dy0, kind, float(margins[j]), float(t[j]), nus, admissible), traj


def _system_outcome(i, cert, y0, dy0, horizon, rtol, atol, slack, admissible):
    """Direct integration of the linear system against the lifted phi."""
    sys = cert.problem.system
    red = cert.reduced_system
    co = cert.coefficients
    t0 = cert.region.t0
    m = red.matrix(t0)
    phi0 = 1.0
    chi0 = (dy0 + m[0, 1] * y0 ** 2 + (m[0, 0] - m[1, 1]) * y0 - m[1, 0]) * phi0 / m[1, 2]
    eta0 = y0 * phi0
    a12_0, a13_0 = evaluate(sys.entry(1, 2), t0), evaluate(sys.entry(1, 3), t0)
    psi0 = eta0 - (a13_0 / a12_0) * chi0
    direct = integrate(sys.field(), [phi0, psi0, chi0], (t0, horizon), rtol, atol, escape_threshold=1e250)
    if direct.status == STALLED:
        return ICOutcome(i, y0, dy0, STALLED, math.nan, direct.t_end, (), admissible)
    t = _check_grid(direct, t0, direct.t_end)
    phi = sample(direct, t)[:, 0]
    j = int(np.argmin(phi))
    extra = {"phi_min": float(phi[j]), "direct_status": direct.status}
    ytraj = integrate(assemble_field(co), [y0, dy0], (t0, horizon), rtol, atol)
    if ytraj.status == COMPLETED:
        lift = lift_sys3_solution(red, co, ytraj, t0, phi0)
        tt = t[t <= lift.t_end]
        phi_l = lift(tt)[:, 0]
        phi_d = sample(direct, tt)[:, 0]
        extra["lift_rel_error"] = float(np.max(np.abs(phi_l - phi_d) / np.maximum(1.0, np.abs(phi_d))))
    else:
        extra["lift_rel_error"] = math.inf
        extra["riccati_status"] = ytraj.status
    ok = direct.status == COMPLETED and phi[j] > 0.0
    kind = "bounds_held" if ok else "phi_vanished"
    return ICOutcome(i, y0, dy0, kind, float(phi[j]), float(t[j]), (), admissible, extra)


def verify_conclusion(cert: Certificate, ics, horizon: Optional[float] = None, tol: Optional[float] = None,
                      *, rtol: float = 1e-10, atol: float = 1e-12,
                      raise_on_stall: bool = False) -> VerificationReport:
    """Integrate from each IC and assert the certified conclusions.

    Bounds and ``nu`` signs are checked with slack ``tol`` (default
    ``1e-6 + 10 rtol``) on the union of the step mesh and a 4001-point grid.
    ICs outside the admissible region are still integrated but flagged
    ``admissible=False`` and do not count toward ``passed``.
    """
    if cert.verdict != CERTIFIED:
        raise InadmissibleError(f"certificate is {cert.verdict}; nothing to verify")
    horizon = cert.conclusion.horizon if horizon is None else float(horizon)
    slack = slack_for(rtol) if tol is None else float(tol)
    outcomes = []
    for i, (y0, dy0) in enumerate(ics):
        adm = cert.region.contains(y0, dy0, slack=1e-12)
        if cert.theorem == "T5.1":
            out = _system_outcome(i, cert, y0, dy0, horizon, rtol, atol, slack, adm)
        else:
            out, _ = _riccati_outcome(i, cert, y0, dy0, horizon, rtol, atol, slack, adm)
        if out.kind == STALLED and raise_on_stall:
            raise StalledError(f"integration stalled for IC #{i} at t={out.t_at}")
        outcomes.append(out)
    return VerificationReport(cert.theorem, cert.verdict, horizon, slack, tuple(outcomes))


# ---------------------------------------------------------------------------
# oracles


def brute_force_gamma_min(co: RiccatiCoefficients, t: float, R: float = 50.0, n: int = 1001,
                          factor: int = 10) -> float:
    """Minimum of Gamma(t, u, v) over an ``n x n`` grid on ``[-R, R]^2``, refined once."""
    if n < 100:
        raise ValueError("n must be at least 100")
    a, _, c, d, _, da, db = (float(x) for x in co.values(float(t)))
    k2, k1, k0 = a * a, c - 1.5 * da, d - db

    def G(u, v):
        return k2 * (u * u + u * v + v * v) + k1 * (u + v) + k0

    g = np.linspace(-R, R, n)
    U, V = np.meshgrid(g, g, indexing="ij")
    vals = G(U, V)
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    best = float(vals[i, j])
    h = g[1] - g[0]
    fu = np.linspace(g[i] - h, g[i] + h, 2 * factor + 1)
    fv = np.linspace(g[j] - h, g[j] + h, 2 * factor + 1)
    Uf, Vf = np.meshgrid(fu, fv, indexing="ij")
    return min(best, float(np.min(G(Uf, Vf))))


@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    passed: bool
    hypotheses_hold: bool
    margins: dict
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "pass": self.passed, "hypotheses_hold": self.hypotheses_hold,
                "margins": {k: self.margins[k] for k in sorted(self.margins)}, "notes": list(self.notes)}


def verify_lemma_23_24(co: RiccatiCoefficients, witness: float, ytraj: Trajectory, side: str = "upper",
                       *, t1: Optional[float] = None, slack: Optional[float] = None) -> LemmaReport:
    """Check the comparison between ``ytraj`` and a constant witness.

    ``side='upper'``: ``eta >= y`` and ``nu(t, eta, y, 0, y') >= 0``.
    ``side='lower'``: ``zeta <= y`` and ``nu(t, zeta, y, 0, y') <= 0``.
    The lower orientation follows the lemma's hypotheses; the reversed
    inequality ``zeta >= y`` is reported as a note margin only.
    """
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    slack = slack_for(ytraj.rtol) if slack is None else slack
    t1 = ytraj.t_start if t1 is None else t1
    sgn = 1.0 if side == "upper" else -1.0
    y1, v1 = sample(ytraj, t1)
    init_order = sgn * (witness - y1)
    init_nu = sgn * float(nu(co, t1, witness, y1, 0.0, v1))
    if init_order < 0 or init_nu < 0:
        raise InadmissibleError(
            f"initial data violate the {side} comparison precondition "
            f"(order margin {init_order:.3g}, nu margin {init_nu:.3g})")
    t = _check_grid(ytraj, t1, ytraj.t_end)
    st = sample(ytraj, t)
    y, dy = st[:, 0], st[:, 1]
    order = sgn * (witness - y)
    nus = sgn * nu(co, t, witness, y, 0.0, dy)
    wm, _ = witness_margin(co, witness, (t1, ytraj.t_end), side)
    dmin = float(np.min(np.broadcast_to(disc_D(co, t), t.shape)))
    amin = float(np.min(np.abs(np.broadcast_to(evaluate(co.a, t), t.shape))))
    margins = {"order": float(order.min()), "nu": float(nus.min()), "witness_inequality": wm,
               "D_min": dmin, "abs_a_min": amin}
    notes = ()
    if side == "lower":
        margins["printed_reverse_order"] = float(np.min(witness - y))
        notes = ("the printed conclusion zeta >= y is recorded as printed_reverse_order",)
    hyp = wm >= -1e-9 and dmin >= -1e-9 and amin > 0
    passed = margins["order"] >= -slack and margins["nu"] >= -slack
    return LemmaReport("2.3" if side == "upper" else "2.4", passed, hyp, margins, notes)


def verify_lemma_22(co: RiccatiCoefficients, ytraj: Trajectory, t2: Optional[float] = None, *,
                    n: int = 4001) -> LemmaReport:
    """Continuation check: ``F = int a y`` bounded below implies the solution extends past ``t2``.

    When ``ytraj`` escaped at ``t2`` the sign of ``a y`` at the last step
    decides boundedness (``F -> -inf`` iff ``a y -> -inf``). When the
    hypothesis holds, the equation is re-integrated to
    ``t2 + 0.1 (t2 - t1)`` and must complete.
    """
    t1 = ytraj.t_start
    t2 = ytraj.t_end if t2 is None else float(t2)
    if t2 > ytraj.t_end:
        raise OutOfRangeError(f"trajectory ends at {ytraj.t_end} < t2={t2}")
    t = uniform_grid((t1, t2), n)
    st = sample(ytraj, t)
    ay = np.broadcast_to(evaluate(co.a, t), t.shape) * st[:, 0]
    F = cumulative_simpson(ay, t)
    ends_at_escape = ytraj.status == ESCAPED and t2 >= ytraj.t_end
    bounded = not (ends_at_escape and ay[-1] < 0)
    margins = {"F_min": float(F.min()), "F_end": float(F[-1])}
    if not bounded:
        return LemmaReport("2.2", True, False, margins,
                           ("F unbounded below at the escape point; the lemma makes no claim",))
    t3 = t2 + 0.1 * (t2 - t1)
    y0 = sample(ytraj, t1)
    ext = integrate(assemble_field(co), y0, (t1, t3), ytraj.rtol, ytraj.atol,
                    escape_threshold=ytraj.escape_threshold)
    margins["continued_to"] = ext.t_end
    return LemmaReport("2.2", ext.status == COMPLETED, True, margins)
