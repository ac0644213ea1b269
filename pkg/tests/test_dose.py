import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerochannel import dmc, dose


def test_expected_virions_at_20um():
    assert dose.expected_virions(2e-5, 7e6) == pytest.approx(0.0293215314335, rel=1e-10)
    assert dose.expected_virions(4e-5, 7e6) == pytest.approx(8 * dose.expected_virions(2e-5, 7e6))
    assert dose.expected_virions(2e-5, 0.0) == 0.0


def test_virion_probability_about_three_percent():
    p = dose.virion_probability(2e-5, dose.ViralLoad(7e6))
    assert p == pytest.approx(0.0288958262534, rel=1e-10)
    assert 0.025 <= p <= 0.035
    assert dose.virion_probability(2e-5, 0.0) == 0.0


@given(st.floats(1e-7, 0.04))
def test_small_load_probability_tends_to_mean(lam):
    d = (lam / (7e6 * math.pi / 6 * 1e6)) ** (1 / 3)
    assert dose.virion_probability(d, 7e6) == pytest.approx(lam, rel=0.02)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        dose.ViralLoad(-1.0)
    with pytest.raises(ValueError):
        dose.expected_virions(0.0, 1e6)
    with pytest.raises(ValueError):
        dose.InfectionThreshold(0.0)


def test_conditional_count():
    assert dose.virions_given_infected(0.0) == 1.0
    assert dose.virions_given_infected(1e-9) == pytest.approx(1.0)
    lam = np.array([0.01, 1.0, 30.0])
    np.testing.assert_allclose(dose.virions_given_infected(lam) * -np.expm1(-lam), lam)


def single(p=1.0, q=1.0, N=100.0, eta=2.0):
    return dose.SizeClassProfile([1e-5], [2e-5], [p], [q], [N], [eta])


def test_absorbed_dose_arithmetic():
    assert dose.absorbed_dose(single(), 3) == 600.0
    assert dose.absorbed_dose(single(q=0.0), 3) == 0.0


def test_absorbed_dose_additive(rng):
    rows = rng.random((4, 2))
    two = dose.SizeClassProfile([1e-6, 1e-5], [1e-5, 1e-4], *rows)
    parts = [dose.SizeClassProfile([two.d_lo[k]], [two.d_hi[k]], *rows[:, k:k + 1]) for k in range(2)]
    brute = sum(rows[0, k] * rows[1, k] * rows[2, k] * rows[3, k] for k in range(2)) * 7
    assert dose.absorbed_dose(two, 7) == pytest.approx(brute)
    assert dose.absorbed_dose(two, 7) == pytest.approx(sum(dose.absorbed_dose(p, 7) for p in parts))


def test_threshold_is_strict():
    assert not dose.is_infected(100.0, 100.0)
    assert dose.is_infected(100.0 + 1e-9, dose.InfectionThreshold(100.0))
    assert not dose.is_infected(0.0, 1.0)


def test_profile_validation():
    with pytest.raises(ValueError):
        dose.SizeClassProfile([1e-5], [2e-5], [1.5], [0.1], [1], [1])
    with pytest.raises(ValueError):
        dose.SizeClassProfile([1e-5, 2e-5], [2e-5], [0.5], [0.1], [1], [1])


def test_profile_round_trips(rng):
    lo = np.geomspace(2e-6, 1e-3, 5)
    prof = dose.profile_for_load(lo, lo * 2, np.full(5, 0.2), rng.random(5), 4973, 1e9)
    for text, parse in ((dose.profile_to_csv(prof), dose.profile_from_csv),
                        (dose.profile_to_json(prof), dose.profile_from_json)):
        back = parse(text)
        for name in dose.PROFILE_COLUMNS:
            np.testing.assert_array_equal(getattr(back, name), getattr(prof, name))
    assert dose.profile_to_csv(prof).splitlines()[0] == "d_lo,d_hi,p,q,N,eta"


def test_profile_dose_is_mean_virion_flux():
    lo = np.array([1e-5, 1e-4])
    hi = lo * 4
    prof = dose.profile_for_load(lo, hi, [0.7, 0.3], [0.2, 0.05], 1000, 1e8)
    lam = dose.expected_virions(np.sqrt(lo * hi), 1e8)
    assert dose.absorbed_dose(prof, 1) == pytest.approx(np.sum(1000 * np.array([0.7, 0.3]) * [0.2, 0.05] * lam))


def test_class_products_match_linear_measure():
    # each size class as an input event of a channel with outputs (miss, hit)
    p = np.array([0.05, 0.1, 0.2])
    q = np.array([0.3, 0.6, 0.9])
    rows = [[1.0, 0.0]] + [[1 - qi, qi] for qi in q]
    ch = dmc.DmcChannel.from_matrix(rows)
    p_x = dmc.InputDistribution(np.concatenate([[1 - p.sum()], p]))
    assert dmc.linear_infection_measure(ch, p_x, [1]) == pytest.approx(np.sum(p * q), abs=1e-15)
