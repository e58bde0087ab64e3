import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavcollect.config import Scenario
from uavcollect.energy import (PowerParams, parasite_power, propulsion_power, slot_energy)
from uavcollect.radio import (ChannelParams, achievable_rate, dbm_to_watts, elevation_angle,
                              expected_gain, los_probability, nlos_probability, rate_matrix)
from uavcollect.world import (Region, SimParams, UavAction, UavState, advance_uav,
                              coverage_radius, covered_set)

SCEN = Scenario()
REGION = Region.from_scenario(SCEN)
SIM = SimParams.from_scenario(SCEN)
CHAN = ChannelParams.from_scenario(SCEN)
POWER = PowerParams.from_scenario(SCEN)


# --- world -----------------------------------------------------------------------

def test_advance_east():
    assert advance_uav(UavState(500, 500), UavAction(0, 10, 2), REGION, SIM) == UavState(520, 500)


def test_advance_clamps_at_boundary():
    # unclamped x = 990 + 25 * 5 = 1115
    assert advance_uav(UavState(990, 500), UavAction(0, 25, 5), REGION, SIM) == UavState(1000, 500)


def test_zero_speed_keeps_position():
    uav = UavState(123.4, 567.8)
    assert advance_uav(uav, UavAction(1.3, 0, 5), REGION, SIM) == uav


@pytest.mark.parametrize("act", [
    UavAction(float("nan"), 1, 1), UavAction(0, -1, 1), UavAction(0, 26, 1),
    UavAction(0, 1, 5.5), UavAction(7.0, 1, 1), UavAction(0, float("inf"), 1),
])
def test_advance_rejects_bad_actions(act):
    with pytest.raises(ValueError):
        advance_uav(UavState(0, 0), act, REGION, SIM)


def test_advance_fuzz_stays_in_region():
    rng = np.random.default_rng(0)
    pos = rng.uniform(0, 1000, (100_000, 2))
    acts = rng.uniform(0, 1, (100_000, 3)) * [2 * math.pi, 25, 5]
    for (x, y), (th, v, f) in zip(pos, acts):
        out = advance_uav(UavState(x, y), UavAction(th, v, f), REGION, SIM)
        assert 0 <= out.x <= 1000 and 0 <= out.y <= 1000


@given(st.floats(0, 2 * math.pi), st.floats(0, 25), st.floats(0, 5))
def test_unclamped_displacement_equals_v_times_fly(theta, v, fly):
    big = Region(1e6, 1e6, 100)
    start = UavState(5e5, 5e5)
    out = advance_uav(start, UavAction(theta, v, fly), big, SIM)
    assert math.hypot(out.x - start.x, out.y - start.y) == pytest.approx(v * fly, rel=1e-9, abs=1e-9)


def test_coverage_radius_examples():
    assert coverage_radius(Region(1, 1, 100), SimParams(25, 5, math.pi / 4)) == pytest.approx(100)
    assert coverage_radius(REGION, SIM) == pytest.approx(155.74, abs=0.01)
    with pytest.raises(ValueError):
        Region(1, 1, 0)
    with pytest.raises(ValueError):
        coverage_radius(REGION, SimParams(25, 5, math.pi / 2))


def test_covered_set_boundary():
    r = coverage_radius(REGION, SIM)
    uav = UavState(500, 500)
    xy = np.array([[500, 500], [500 + r, 500], [500 + r + 1e-9, 500]])
    assert covered_set(uav, xy, REGION, SIM) == {0, 1}


@given(st.floats(0.1, 1.4), st.floats(0.1, 1.4))
@settings(max_examples=50)
def test_covered_set_monotone_in_omega(w1, w2):
    lo, hi = sorted((w1, w2))
    xy = np.random.default_rng(1).uniform(0, 1000, (200, 2))
    uav = UavState(400, 600)
    small = covered_set(uav, xy, REGION, SimParams(25, 5, lo))
    large = covered_set(uav, xy, REGION, SimParams(25, 5, hi))
    assert small <= large


# --- radio -----------------------------------------------------------------------

def test_elevation_angle_examples():
    uav = UavState(0, 0)
    assert elevation_angle(uav, (0, 0), REGION) == 90.0
    assert elevation_angle(uav, (100, 0), REGION) == pytest.approx(45.0)
    assert elevation_angle(uav, (173.205, 0), REGION) == pytest.approx(30.0, abs=1e-4)


def test_los_probability_examples():
    assert los_probability(15.0, CHAN) == pytest.approx(1 / 16, rel=1e-15)
    # 1 - 15 exp(-37.5)
    assert 1 - los_probability(90.0, CHAN) == pytest.approx(15 * math.exp(-37.5), rel=1e-2)
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b = np.sort(rng.uniform(0, 90, 2))
        if a < b:
            assert los_probability(a, CHAN) < los_probability(b, CHAN)


def test_los_nlos_complement():
    w = np.linspace(0, 90, 91)
    np.testing.assert_array_equal(los_probability(w, CHAN) + nlos_probability(w, CHAN),
                                  los_probability(w, CHAN) + (1 - los_probability(w, CHAN)))


def test_expected_gain_beneath():
    # g0 = -50 dB = 1e-5, distance 100 m, iota 2.2, P_LoS ~ 1
    g = expected_gain(UavState(0, 0), (0, 0), REGION, CHAN)
    assert g == pytest.approx(1e-5 / 100 ** 2.2, rel=1e-12)
    assert g == pytest.approx(3.98e-10, rel=1e-3)


def test_gain_kappa_one_limit():
    chan = ChannelParams(15, 0.5, 1e-5, 1 - 1e-15, 2.2, 0.1, 1e6, dbm_to_watts(-174))
    g = expected_gain(UavState(0, 0), (300, 0), REGION, chan)
    assert g == pytest.approx(1e-5 / (100 ** 2 + 300 ** 2) ** 1.1, rel=1e-12)


def test_gain_decreases_with_distance():
    d = np.linspace(0, 2000, 500)
    g = expected_gain(UavState(0, 0), np.stack([d, np.zeros_like(d)], 1), REGION, CHAN)
    assert (np.diff(g) < 0).all()


def test_rate_examples():
    assert achievable_rate(0.0, CHAN) == 0.0
    n0 = 10 ** -20.4
    assert CHAN.noise_psd_n0 == pytest.approx(n0, rel=1e-12)
    snr = 0.1 * 3.98e-10 / (1e6 * n0)
    assert snr == pytest.approx(1e4, rel=1e-3)
    rate = achievable_rate(3.98e-10, CHAN)
    assert rate == pytest.approx(13.29e6, rel=5e-3)
    assert achievable_rate(3.98e-10, CHAN, interference=2e-9) < achievable_rate(3.98e-10, CHAN, interference=1e-9)


def test_rate_monotone_in_gain_and_power():
    g = np.logspace(-14, -8, 50)
    r = achievable_rate(g, CHAN)
    assert (np.diff(r) > 0).all()
    louder = ChannelParams(15, 0.5, 1e-5, 0.2, 2.2, 0.2, 1e6, dbm_to_watts(-174))
    assert (achievable_rate(g, louder) > r).all()


def test_rate_independent_of_rb_without_interference():
    xy = np.random.default_rng(3).uniform(0, 1000, (20, 2))
    rates = rate_matrix(UavState(500, 500), xy, REGION, CHAN, n_rbs=6)
    assert (rates == rates[:, :1]).all()


def test_channel_param_validation():
    with pytest.raises(ValueError):
        ChannelParams(15, 0.5, 1e-5, 1.0, 2.2, 0.1, 1e6, 1e-20)
    with pytest.raises(ValueError):
        ChannelParams(15, 0.5, 1e-5, 0.2, 2.2, 0.1, 1e6, 1e-20, interference_i=-1)


# --- energy ----------------------------------------------------------------------

def test_hover_power():
    assert propulsion_power(0.0, POWER) == pytest.approx(168.49, abs=1e-12)


def test_parasite_term_at_10():
    assert parasite_power(10.0, POWER) == pytest.approx(0.5 * 0.6 * 1.225 * 0.05 * 0.503 * 1000)
    assert parasite_power(10.0, POWER) == pytest.approx(9.243, abs=1e-3)


def test_power_formula_continuous_at_zero():
    assert propulsion_power(1e-9, POWER) == pytest.approx(168.49, rel=1e-12)


def test_slot_energy_examples():
    assert slot_energy(0.0, 0.0, POWER, 5.0) == pytest.approx(842.45, abs=1e-9)
    assert slot_energy(5.0, 12.0, POWER, 5.0) == pytest.approx(5 * propulsion_power(12.0, POWER))
    assert slot_energy(2.5, 0.0, POWER, 5.0) == pytest.approx(842.45, abs=1e-9)
    with pytest.raises(ValueError):
        slot_energy(6.0, 1.0, POWER, 5.0)


@given(st.floats(0, 300))
def test_power_positive(v):
    assert propulsion_power(v, POWER) > 0


def test_parasite_dominates_at_high_speed():
    for v in (100.0, 150.0, 300.0):
        assert parasite_power(v, POWER) > 0.9 * propulsion_power(v, POWER)
