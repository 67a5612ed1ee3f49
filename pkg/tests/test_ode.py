import math

import numpy as np
import pytest

from riccert.errors import OutOfRangeError
from riccert.ode import COMPLETED, ESCAPED, STALLED, detect_escape, integrate, sample
from riccert.riccati import RiccatiCoefficients, assemble_field


def exp_field(t, y):
    return y


def test_exponential_endpoint():
    tr = integrate(exp_field, [1.0], (0, 1), 1e-10, 1e-12)
    assert tr.status == COMPLETED
    assert tr.y[-1, 0] == pytest.approx(math.e, abs=1e-8)


def test_dense_output_midpoint():
    tr = integrate(exp_field, [1.0], (0, 1), 1e-10, 1e-12)
    assert sample(tr, 0.5)[0] == pytest.approx(math.exp(0.5), abs=1e-7)
    t = np.linspace(0, 1, 257)
    assert np.max(np.abs(sample(tr, t)[:, 0] - np.exp(t))) < 1e-7


def test_sample_anchors_at_mesh():
    tr = integrate(exp_field, [1.0], (0, 2), 1e-6, 1e-9)
    for i in (0, 3, len(tr.t) - 1):
        assert np.array_equal(sample(tr, tr.t[i]), tr.y[i])


def test_sample_out_of_range():
    tr = integrate(exp_field, [1.0], (0, 1))
    with pytest.raises(OutOfRangeError):
        sample(tr, 1.5)
    with pytest.raises(OutOfRangeError):
        tr(-0.1)


def test_zero_field_constant():
    tr = integrate(lambda t, y: np.zeros_like(y), [3.5], (0, 10))
    assert tr.status == COMPLETED and tr.t_end == 10.0
    assert np.all(tr.y == 3.5)


def test_quadratic_escape():
    tr = integrate(lambda t, y: y * y, [1.0], (0, 2))
    assert tr.status == ESCAPED
    assert 0.99 <= tr.t_est <= 1.01
    rep = detect_escape(tr, 2.0)
    assert rep.classification == "finite_escape"
    assert abs(rep.t_est - 1.0) <= 0.01


def test_decay_reaches_horizon():
    tr = integrate(lambda t, y: -y, [1.0], (0, 10))
    assert detect_escape(tr, 10.0).classification == "horizon_reached"
    assert tr.t_est is None


def test_riccati_blow_up():
    co = RiccatiCoefficients.of(a="1")
    tr = integrate(assemble_field(co), [-1.0, -1.0], (0, 3), 1e-10, 1e-12)
    rep = detect_escape(tr, 3.0)
    assert rep.classification == "finite_escape"
    assert abs(rep.t_est - 1.0) <= 0.01
    t = np.linspace(0, 0.9, 50)
    assert np.allclose(sample(tr, t)[:, 0], -1 / (1 - t), rtol=1e-7)


def test_step_budget_stalls():
    tr = integrate(exp_field, [1.0], (0, 100), 1e-12, 1e-14, max_steps=5)
    assert tr.status == STALLED
    assert detect_escape(tr, 100.0).classification == "stalled"


def test_fixed_step_fifth_order():
    errs = []
    for h in (0.1, 0.05):
        tr = integrate(exp_field, [1.0], (0, 1), fixed_step=h)
        errs.append(abs(tr.y[-1, 0] - math.e))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(5.0, abs=0.4)


def test_tolerance_respected_on_oscillator():
    tr = integrate(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0], (0, 20), 1e-10, 1e-12)
    t = np.linspace(0, 20, 401)
    assert np.max(np.abs(sample(tr, t)[:, 0] - np.sin(t))) < 1e-7


def test_bad_arguments():
    with pytest.raises(ValueError):
        integrate(exp_field, [1.0], (1, 0))
    with pytest.raises(ValueError):
        integrate(exp_field, [1.0], (0, 1), rtol=0)
