import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ers_sim.battery import (CALENDAR_CAP_YEARS, REFERENCE_PROFILES, BatteryState, WearTracker, acceptance_fraction,
                             apply_charge, charge_accepted, close_open_run, estimate_battery_life,
                             half_cycle_stress, update_battery_wear)
from ers_sim.errors import NegativeEnergy, UnknownProfile

soc_values = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def test_apply_charge_linear_region():
    b, acc = apply_charge(BatteryState(50.0, 0.50), 1.0)
    assert acc == pytest.approx(1.0)
    assert b.soc == pytest.approx(0.52)


def test_apply_charge_at_ceiling():
    b, acc = apply_charge(BatteryState(50.0, 0.90), 1.0)
    assert acc == 0.0 and b.soc == 0.90


def test_taper_midpoint():
    # linear from 1 at 0.85 to 0 at 0.90: (0.90 - 0.875) / 0.05
    assert acceptance_fraction(0.875) == pytest.approx(0.5)
    assert acceptance_fraction(0.85) == pytest.approx(1.0)
    # a tiny offer at the midpoint is accepted at the instantaneous rate
    assert charge_accepted(0.875, 50.0, 1e-6) == pytest.approx(0.5e-6, rel=1e-5)


def test_negative_energy():
    with pytest.raises(NegativeEnergy):
        apply_charge(BatteryState(50.0, 0.5), -0.1)


@given(soc_values, st.floats(0, 500), st.floats(1, 300))
def test_charge_never_exceeds_ceiling(soc, kwh, cap):
    b, acc = apply_charge(BatteryState(cap, soc), kwh)
    assert 0.0 <= acc <= kwh + 1e-12
    assert 0.0 <= b.soc <= 1.0
    assert b.soc <= max(soc, 0.90) + 1e-12


def test_wear_example_deep_excursion():
    b = update_battery_wear(BatteryState(50.0, 0.9), [0.90, 0.28, 0.90], 25.0)
    assert b.deep_discharges == 1
    assert b.efc == pytest.approx(0.62)
    assert b.stress == pytest.approx(half_cycle_stress(0.62, 25.0))


def test_wear_constant_trace_no_change():
    b0 = BatteryState(50.0, 0.6)
    b = update_battery_wear(b0, [0.6] * 20, 30.0)
    assert (b.deep_discharges, b.efc, b.stress, b.throughput_kwh) == (0, 0.0, 0.0, 0.0)


def test_wear_temperature_doubling():
    trace = [0.8, 0.5, 0.8, 0.4, 0.7]
    hot = update_battery_wear(BatteryState(50.0, 0.8), trace, 35.0)
    cold = update_battery_wear(BatteryState(50.0, 0.8), trace, 25.0)
    assert hot.stress == pytest.approx(2.0 * cold.stress, rel=1e-12)


def test_open_run_carried_across_calls():
    whole = close_open_run(update_battery_wear(BatteryState(50.0, 0.9), [0.9, 0.7, 0.5, 0.3], 25.0))
    b = update_battery_wear(BatteryState(50.0, 0.9), [0.9, 0.7], 25.0)
    b = close_open_run(update_battery_wear(b, [0.5, 0.3], 25.0))
    assert b.stress == pytest.approx(whole.stress)
    assert b.stress == pytest.approx(half_cycle_stress(0.6, 25.0))


@given(st.lists(st.floats(0.31, 0.9), min_size=2, max_size=30), st.floats(0.0, 0.3))
def test_deeper_excursion_never_less_stress(trace, extra):
    i = int(np.argmin(trace))
    deeper = list(trace)
    deeper[i] = max(trace[i] - extra, 0.0)
    a = close_open_run(update_battery_wear(BatteryState(50.0, trace[0]), trace, 30.0))
    b = close_open_run(update_battery_wear(BatteryState(50.0, deeper[0]), deeper, 30.0))
    assert b.stress >= a.stress - 1e-15


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=60), min_size=1, max_size=6))
def test_tracker_matches_scalar_wear(traces):
    """Per-sample vectorized counting equals the trace-at-once function for each vehicle."""
    n = len(traces)
    length = max(len(t) for t in traces)
    padded = [t + [t[-1]] * (length - len(t)) for t in traces]
    tr = WearTracker(0)
    tr.extend(np.array([t[0] for t in padded]))
    for k in range(1, length):
        tr.update(None, np.array([t[k] for t in padded]), 30.0)
    for i, t in enumerate(padded):
        b = update_battery_wear(BatteryState(50.0, t[0]), t, 30.0)
        assert tr.deep[i] == b.deep_discharges
        assert tr.efc[i] == pytest.approx(b.efc, abs=1e-12)
        assert tr.stress[i] == pytest.approx(b.stress, rel=1e-9, abs=1e-18)
    assert len(tr) == n


def test_tracker_keep_returns_dropped_rows():
    tr = WearTracker(0)
    tr.extend(np.array([0.5, 0.5, 0.5]))
    tr.update(None, np.array([0.2, 0.4, 0.6]), 25.0)
    gone = tr.keep(np.array([True, False, True]))
    assert gone["deep"].tolist() == [0]
    assert len(tr) == 2
    assert tr.deep.tolist() == [1, 0]


def test_reference_profiles_life():
    static = estimate_battery_life("static-fast-charge")
    ers = estimate_battery_life("ers-dynamic")
    assert static.years == pytest.approx(6.0, abs=0.5)
    assert ers.years == pytest.approx(9.0, abs=0.5)
    assert static.deep_per_year == pytest.approx(310, abs=31)
    assert ers.deep_per_year == pytest.approx(125, abs=13)
    reduction = 1.0 - ers.deep_per_year / static.deep_per_year
    assert 0.40 <= reduction <= 0.60


def test_zero_usage_hits_calendar_cap():
    est = estimate_battery_life("idle")
    assert est.years == CALENDAR_CAP_YEARS and est.capped


def test_simulated_trace_profile():
    est = estimate_battery_life((np.full(96, 0.6), 25.0))
    assert est.years == CALENDAR_CAP_YEARS


def test_unknown_profile():
    with pytest.raises(UnknownProfile):
        estimate_battery_life("solar-sail")


def test_reference_temperatures():
    assert REFERENCE_PROFILES["static-fast-charge"].pack_temp_c == 47.5
    assert REFERENCE_PROFILES["ers-dynamic"].pack_temp_c == 34.0
