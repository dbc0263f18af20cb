import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwtree.env_model import (
    OffspringLaw, calibrate_boundary, psi, psi_prime, reference_law, sample_offspring,
    sample_offspring_many, step_law_atoms, step_law_sample, verify_hypotheses,
)
from rwtree.errors import CalibrationError, DomainError

LN2 = math.log(2.0)


def test_reference_law_closed_form(law):
    assert law.params["mu"] == pytest.approx(2 * LN2, abs=1e-12)
    assert law.params["s2"] == pytest.approx(2 * LN2, abs=1e-12)
    assert law.sigma2 == pytest.approx(2 * LN2, abs=1e-10)
    assert abs(psi(law, 1.0)) <= 1e-10 and abs(psi_prime(law, 1.0)) <= 1e-10


def test_psi_at_zero_is_log_mean_offspring(law):
    assert psi(law, 0.0) == pytest.approx(LN2, abs=1e-12)


def test_psi_gaussian_closed_form():
    law = OffspringLaw("gaussian-binary", {"mu": 1.0, "s2": 0.5})
    for s in (-1.0, 0.0, 0.7, 1.5):
        assert psi(law, s) == pytest.approx(LN2 - s * 1.0 + s * s * 0.5 / 2, abs=1e-12)


def test_psi_outside_moment_interval():
    with pytest.raises(DomainError):
        psi(reference_law(), 3.0)


def test_calibrated_law_is_fixed_point(law):
    again = calibrate_boundary(law)
    assert again.params == law.params


def test_two_point_calibration():
    law = calibrate_boundary(OffspringLaw("two-point", {"p": 0.3, "N": 2, "d_minus": 0.0, "d_plus": 2.0}))
    assert abs(psi(law, 1.0)) <= 1e-10 and abs(psi_prime(law, 1.0)) <= 1e-10
    assert law.sigma2 > 0


def test_two_point_without_solution_is_reported():
    with pytest.raises(CalibrationError):
        calibrate_boundary(OffspringLaw("two-point", {"p": 0.5, "N": 3, "d_minus": 0.0, "d_plus": 2.0}))


def test_tabulated_calibration_with_extinction():
    tmpl = OffspringLaw("tabulated", {"atoms": [[0.1, []], [0.5, [0.0, 1.0]], [0.4, [0.5, 0.5, 2.0]]]})
    law = calibrate_boundary(tmpl)
    chk = verify_hypotheses(law)
    assert abs(chk["psi(1)"]) <= 1e-10 and abs(chk["psi'(1)"]) <= 1e-10
    assert law.can_go_extinct


def test_bad_laws_rejected():
    with pytest.raises(DomainError):
        OffspringLaw("levy", {})
    with pytest.raises(DomainError):
        OffspringLaw("tabulated", {"atoms": [[0.5, [1.0]], [0.6, [1.0]]]})
    with pytest.raises(DomainError):
        OffspringLaw("two-point", {"p": 1.5, "N": 2, "d_minus": 0.0, "d_plus": 1.0})


def test_uncalibrated_law_fails_verification():
    with pytest.raises(CalibrationError):
        verify_hypotheses(OffspringLaw("gaussian-binary", {"mu": 1.0, "s2": 1.0}))


def test_serialisation_round_trip(law):
    assert OffspringLaw.from_dict(law.to_dict()) == law


def test_sample_offspring_moments(law):
    rng = np.random.default_rng(1)
    assert len(sample_offspring(law, rng)) == 2
    kids = np.array(sample_offspring_many(law, rng, 200_000))
    w = np.exp(-kids).sum(axis=1)
    m = (kids * np.exp(-kids)).sum(axis=1)
    assert abs(w.mean() - 1.0) <= 3 * w.std() / math.sqrt(len(w))
    assert abs(m.mean()) <= 3 * m.std() / math.sqrt(len(m))


def test_step_law_moments(law):
    x = step_law_sample(law, np.random.default_rng(2), 400_000)
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean()) <= 3 * se
    e = np.exp(x)
    assert abs(e.mean() - 2.0) <= 3 * e.std() / math.sqrt(len(e))
    x2 = x * x
    assert abs(x2.mean() - law.sigma2) <= 3 * x2.std() / math.sqrt(len(x2))


def test_step_law_atoms_are_tilted():
    law = calibrate_boundary(OffspringLaw("two-point", {"p": 0.3, "N": 2, "d_minus": 0.0, "d_plus": 2.0}))
    vals, wts = step_law_atoms(law)
    assert wts.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.dot(vals, wts) == pytest.approx(0.0, abs=1e-10)
    assert np.dot(vals**2, wts) == pytest.approx(law.sigma2, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(mu=st.floats(0.2, 3.0), s2=st.floats(0.2, 3.0))
def test_gaussian_calibration_from_any_start(mu, s2):
    law = calibrate_boundary(OffspringLaw("gaussian-binary", {"mu": mu, "s2": s2}))
    assert law.params["mu"] == pytest.approx(2 * LN2, abs=1e-9)
    assert law.params["s2"] == pytest.approx(2 * LN2, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.05, 0.45), dp=st.floats(0.5, 4.0))
def test_two_point_calibration_property(p, dp):
    law = calibrate_boundary(OffspringLaw("two-point", {"p": p, "N": 2, "d_minus": 0.0, "d_plus": dp}))
    assert abs(psi(law, 1.0)) <= 1e-10 and abs(psi_prime(law, 1.0)) <= 1e-10
