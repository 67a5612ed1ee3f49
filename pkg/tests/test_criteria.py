import json
import math

import numpy as np
import pytest

from riccert.criteria import (AMBIGUOUS, CERTIFIED, INCONCLUSIVE, REFUTED, THEOREMS, Comparison, GridEvidence,
                              Problem, certify, certify_nonoscillation, check_integral_condition,
                              check_sign_conditions, default_partition, partition_ratios, rho_conditions,
                              sup_ratio)
from riccert.expr import evaluate
from riccert.errors import MissingComparisonError, PreconditionError, UnsupportedTheoremError
from riccert.riccati import DiscriminantMode, RiccatiCoefficients
from riccert.transform import LinearSystem3

T41 = RiccatiCoefficients.of(a=1, e=-0.1)


def by_name(evs):
    return {e.name: e for e in evs}


def test_evidence_semantics():
    ok = GridEvidence("x", (0, 1), 11, -5e-10, 0.3, 1e-9)
    assert ok.passed and not ok.refutes
    mid = GridEvidence("x", (0, 1), 11, -5e-9, 0.3, 1e-9)
    assert not mid.passed and not mid.refutes
    bad = GridEvidence("x", (0, 1), 11, -1e-7, 0.3, 1e-9)
    assert bad.refutes
    strict = GridEvidence("x", (0, 1), 11, 0.0, 0.3, 1e-9, strict=True)
    assert not strict.passed and not strict.refutes
    d = GridEvidence("x", (0, 1), 11, -math.inf, 0.3, 1e-9).to_dict()
    json.dumps(d, allow_nan=False)


def test_sign_conditions_constants():
    evs = by_name(check_sign_conditions(RiccatiCoefficients.of(a=1, e=5), (0, 10)))
    assert evs["a_positive"].min_margin == 1.0 and evs["a_positive"].passed
    assert evs["D_nonnegative"].min_margin == 0.0 and evs["D_nonnegative"].passed


def test_sign_conditions_discrepancy_instance():
    co = RiccatiCoefficients.of(a=1, c=3, d=1)
    evs = by_name(check_sign_conditions(co, (0, 1)))
    assert evs["D_nonnegative"].min_margin == pytest.approx(-24.0)
    assert evs["D_nonnegative"].refutes
    lit = by_name(check_sign_conditions(co, (0, 1), d_mode=DiscriminantMode.PAPER_LITERAL))
    assert lit["D_nonnegative"].min_margin == pytest.approx(73.0)


def test_sign_conditions_localise_zero():
    ev = by_name(check_sign_conditions(RiccatiCoefficients.of(a="sin(t)"), (0, 4)))["a_positive"]
    assert not ev.passed
    assert ev.first_violation == pytest.approx(math.pi, abs=4 / 2000)
    assert ev.argmin == pytest.approx(4.0)


def test_sup_ratio():
    assert sup_ratio(T41, (0, 50)) == pytest.approx(0.1)
    assert sup_ratio(RiccatiCoefficients.of(a=1, c="sin(t)"), (0, 10)) == pytest.approx(1.0, abs=1e-4)


def test_partition_ratios_monotone():
    co = RiccatiCoefficients.of(a=1, e="-0.1*t")
    ms = partition_ratios(co, default_partition((0, 10)))
    assert len(ms) == 10
    assert all(b >= a for a, b in zip(ms, ms[1:]))
    assert ms[-1] == pytest.approx(1.0)


def test_integral_condition_signs():
    t = np.linspace(0, 20, 2001)
    zero = check_integral_condition(1.5 * 0.1 + 0 * t, 0 * t, t, -1)
    assert zero.passed and check_integral_condition(0 * t, 0 * t, t, 1).passed
    neg = check_integral_condition(0.15 + 0 * t, -0.1 + 0 * t, t, -1)
    assert neg.passed
    pos = check_integral_condition(0.15 + 0 * t, 0.1 + 0 * t, t, -1)
    assert pos.refutes
    assert pos.min_margin < 0 and pos.argmin == pytest.approx(20.0)


def test_rho_conditions():
    rm, rp, evs = rho_conditions(RiccatiCoefficients.of(a=1, c=1, e=-1), (0, 10))
    assert evaluate_const(rm) == pytest.approx(-1.0) and evaluate_const(rp) == pytest.approx(1.0)
    assert all(e.passed for e in evs)
    _, _, evs = rho_conditions(RiccatiCoefficients.of(a=1, c=1, e=1), (0, 10))
    assert by_name(evs)["discriminant_positive"].min_margin == pytest.approx(-4.0)


def evaluate_const(e):
    return float(np.broadcast_to(evaluate(e, np.array([0.5])), (1,))[0])


def test_t41_certified():
    cert = certify(Problem.riccati(T41, (0, 20)), "T4.1")
    assert cert.verdict == CERTIFIED
    assert cert.constants["M"] == pytest.approx(0.1)
    assert (cert.region.y_lo, cert.region.y_hi) == (0.0, pytest.approx(0.1))


def test_t41_flipped_forcing_refuted():
    cert = certify(Problem.riccati(RiccatiCoefficients.of(a=1, e=0.1), (0, 20)), "T4.1")
    assert cert.verdict == REFUTED
    assert cert.evidence("forcing_integral").refutes


def test_t41_region_bounds():
    region = certify(Problem.riccati(T41, (0, 20)), "T4.1").region
    lo, hi = region.dy_bounds(0.05)
    assert lo == pytest.approx(-0.00375) and hi == pytest.approx(0.01125)
    assert region.dy_bounds(0.0) == (pytest.approx(0.0), pytest.approx(0.015))
    assert region.contains(0.05, 0.0075) and not region.contains(0.05, 0.02)


def test_t41_records_witness_diagnostic():
    cert = certify(Problem.riccati(T41, (0, 20)), "T4.1")
    assert cert.metadata["witness_margin"] == pytest.approx(-0.099)


def test_t43_partition():
    co = RiccatiCoefficients.of(a=1, e="-0.05*(1 + 0.5*sin(t))")
    cert = certify(Problem.riccati(co, (0, 20), partition=[0, 5, 10, 15, 20]), "T4.3")
    assert cert.verdict == CERTIFIED
    assert len(cert.constants["M_n"]) == 4


def test_t44_negative_a():
    cert = certify(Problem.riccati(RiccatiCoefficients.of(a=-1, e=0.1), (0, 20)), "T4.4")
    assert cert.verdict == CERTIFIED
    assert cert.metadata["paper_text_ambiguous"] == AMBIGUOUS["T4.4"]


def test_t45_modes():
    co = RiccatiCoefficients.of(a=1, c=1, e=-1)
    corr = certify(Problem.riccati(co, (0, 20)), "T4.5")
    assert corr.verdict == REFUTED
    assert corr.evidence("condition_4").min_margin == pytest.approx(-4.0)
    lit = certify(Problem.riccati(co, (0, 20)), "T4.5", {"d_mode": "paper"})
    assert lit.verdict == CERTIFIED


def test_lemma21_certificate():
    assert certify(Problem.riccati(T41, (0, 5)), "L2.1").verdict == CERTIFIED
    assert certify(Problem.riccati(RiccatiCoefficients.of(a=1, c=3, d=1), (0, 5)), "L2.1").verdict == REFUTED


def test_t31_requires_comparison():
    with pytest.raises(MissingComparisonError):
        certify(Problem.riccati(T41, (0, 5)), "T3.1")


def test_t31_with_exact_comparison():
    co = RiccatiCoefficients.of(a=1)
    prob = Problem.riccati(co, (0, 10), comparisons={"y1": Comparison.of(co, "1/(t+1)")})
    cert = certify(prob, "T3.1", {"eta": 1.5})
    assert cert.verdict == CERTIFIED
    assert cert.evidence("comparison_solution").passed
    low = certify(prob, "T3.1")  # default witness 0 lies below gamma = 1
    assert low.evidence("witness_order").refutes


def test_t33_ordering():
    co = RiccatiCoefficients.of(a=1)
    prob = Problem.riccati(co, (0, 5), comparisons={"y1": Comparison.of(co, "0"),
                                                    "y2": Comparison.of(co, "1/(t+1)")})
    cert = certify(prob, "T3.3")
    assert cert.evidence("comparison_order").passed
    swapped = Problem.riccati(co, (0, 5), comparisons={"y1": Comparison.of(co, "1/(t+1)"),
                                                       "y2": Comparison.of(co, "0")})
    assert certify(swapped, "T3.3").verdict == REFUTED


def test_unknown_theorem():
    with pytest.raises(UnsupportedTheoremError):
        certify(Problem.riccati(T41, (0, 5)), "T9.9")
    assert set(THEOREMS) >= {"L2.1", "T4.1", "T5.1"}


def test_certificate_json_round_trip():
    cert = certify(Problem.riccati(T41, (0, 20)), "T4.1")
    d = cert.to_dict()
    text = json.dumps(d, sort_keys=True)
    assert json.loads(text)["verdict"] == CERTIFIED
    assert json.dumps(certify(Problem.riccati(T41, (0, 20)), "T4.1").to_dict(), sort_keys=True) == text


def test_nonoscillation_companion():
    cert = certify_nonoscillation(LinearSystem3.companion(0.0, -0.1), (0, 50))
    assert cert.verdict == CERTIFIED
    assert cert.metadata["criterion"] == "T4.1"
    inc = certify_nonoscillation(LinearSystem3.companion(0.0, 0.1), (0, 50))
    assert inc.verdict == INCONCLUSIVE


def test_nonoscillation_degenerate():
    with pytest.raises(PreconditionError):
        certify_nonoscillation(LinearSystem3.from_dict({"a12": 1, "a23": "t"}), (-1, 1))
