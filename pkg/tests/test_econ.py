import pytest
from hypothesis import assume, given, strategies as st

from ers_sim.econ import (FinancialConfig, Money, blended_cost, breakeven_year, co2_savings, cost_per_vehicle_km,
                          cumulative_cashflow, energy_savings_gwh)
from ers_sim.scenario import EconCfg

DELHI_VKM = 18_000 * 10 * 365


def spreadsheet_breakeven(capex, yearly_net, horizon=100):
    """Year-by-year cumulative cash with linear interpolation in the crossing year."""
    cum = -capex
    for y in range(1, horizon + 1):
        nxt = cum + yearly_net
        if nxt >= 0:
            return y - 1 + (-cum) / yearly_net
        cum = nxt
    return None


def test_co2_examples():
    assert DELHI_VKM == 65_700_000
    assert co2_savings(DELHI_VKM, 0.502) == pytest.approx(32_981.4)
    assert co2_savings(0, 0.502) == 0.0
    assert 33_000_000 / DELHI_VKM == pytest.approx(EconCfg().emission_factor_kg_per_km, abs=5e-5)


def test_energy_savings_factor():
    assert 9.8e6 / DELHI_VKM == pytest.approx(EconCfg().savings_kwh_per_km, abs=5e-5)
    assert energy_savings_gwh(DELHI_VKM, 0.1492) == pytest.approx(9.8, rel=0.002)


@given(st.floats(0, 1e9), st.floats(0, 5), st.floats(0.1, 10))
def test_co2_linear(km, factor, k):
    assert co2_savings(km * k, factor) == pytest.approx(k * co2_savings(km, factor), rel=1e-9, abs=1e-9)
    assert co2_savings(km, factor * k) == pytest.approx(k * co2_savings(km, factor), rel=1e-9, abs=1e-9)


def reference_config(margin=0.036):
    # tariff minus energy cost equals the margin; capex $9M for 5 km
    return FinancialConfig(capex=9e6, opex_frac=0.02, tariff=0.08 + margin, blended_cost=0.08)


def test_breakeven_reference_case():
    be = breakeven_year(reference_config(), 37e6)
    assert 6.0 <= be <= 8.0
    assert be == pytest.approx(spreadsheet_breakeven(9e6, 0.036 * 37e6 - 0.02 * 9e6))
    assert cumulative_cashflow(reference_config(), 37e6, be) == pytest.approx(0.0, abs=1e-3)


def test_breakeven_never_without_revenue():
    assert breakeven_year(reference_config(), 0.0) is None


def test_doubling_margin():
    base = breakeven_year(reference_config(0.036), 37e6)
    double = breakeven_year(reference_config(0.072), 37e6)
    assert double < 0.6 * base


@given(st.floats(1e5, 1e8), st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.floats(1e6, 1e8))
def test_breakeven_monotone(capex, m1, m2, sold):
    def years(cap, margin):
        be = breakeven_year(FinancialConfig(capex=cap, tariff=0.1 + margin, blended_cost=0.1), sold)
        return float("inf") if be is None else be  # NEVER sorts after every finite year

    lo, hi = sorted((m1, m2))
    assert years(capex, hi) <= years(capex, lo) + 1e-9
    assert years(capex * 1.5, lo) >= years(capex, lo) - 1e-9


@given(st.floats(1e5, 1e8), st.floats(1e3, 1e7))
def test_breakeven_matches_spreadsheet(capex, net):
    cfg = FinancialConfig(capex=capex, opex_frac=0.0, tariff=1.0, blended_cost=0.0)
    assume(capex / net < 100)
    assert breakeven_year(cfg, net) == pytest.approx(spreadsheet_breakeven(capex, net), rel=1e-9)


def test_cost_per_vehicle_km():
    assert cost_per_vehicle_km(0.15, 11.0) == pytest.approx(1.65)
    assert cost_per_vehicle_km(0.0, 11.0) == 0.0
    with pytest.raises(ValueError):
        cost_per_vehicle_km(-1.0, 1.0)


def test_blended_cost():
    assert blended_cost({"solar": 60.0, "grid_offpeak": 40.0}, {"solar": 3.5, "grid_offpeak": 7.0}) == \
        pytest.approx(4.9)
    assert blended_cost({}, {"solar": 1.0}) == 0.0


def test_money_conversion():
    assert Money(1.0, "USD").to("INR").value == 83.0
    assert Money(166.0, "INR").to("USD", usd_inr=83.0).value == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Money(1.0, "EUR").to("USD")


@pytest.mark.parametrize("kwargs", [dict(capex=-1), dict(capex=1, horizon_years=0), dict(capex=1, opex_frac=0.3)])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        FinancialConfig(**kwargs)
