"""Corridor economics and environmental accounting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

YEAR_S = 365.0 * 86400.0


@dataclass(frozen=True)
class Money:
    value: float
    currency: str = "USD"

    def to(self, currency: str, usd_inr: float = 83.0) -> "Money":
        if currency == self.currency:
            return self
        if (self.currency, currency) == ("USD", "INR"):
            return Money(self.value * usd_inr, currency)
        if (self.currency, currency) == ("INR", "USD"):
            return Money(self.value / usd_inr, currency)
        raise ValueError(f"no rate for {self.currency} -> {currency}")


@dataclass(frozen=True)
class FinancialConfig:
    capex: float
    opex_frac: float = 0.02
    tariff: float = 0.20
    blended_cost: float = 0.0
    horizon_years: int = 10
    currency: str = "USD"

    def __post_init__(self):
        if self.capex < 0:
            raise ValueError("capex must be >= 0")
        if self.horizon_years < 1:
            raise ValueError("horizon must be >= 1 year")
        if not 0.0 <= self.opex_frac <= 0.2:
            raise ValueError("opex fraction must lie in [0, 0.2]")

    @property
    def annual_opex(self) -> float:
        return self.capex * self.opex_frac


def co2_savings(vehicle_km: float, factor_kg_per_km: float) -> float:
    """Tonnes of CO2 avoided."""
    if vehicle_km < 0 or factor_kg_per_km < 0:
        raise ValueError("inputs must be >= 0")
    return vehicle_km * factor_kg_per_km / 1000.0


def energy_savings_gwh(vehicle_km: float, factor_kwh_per_km: float) -> float:
    return vehicle_km * factor_kwh_per_km / 1e6


def blended_cost(kwh_by_source: Mapping[str, float], cost_table: Mapping[str, float]) -> float:
    total = sum(kwh_by_source.values())
    if total <= 0:
        return 0.0
    return sum(kwh * cost_table.get(src, 0.0) for src, kwh in kwh_by_source.items()) / total


def annual_net(cfg: FinancialConfig, annual_kwh_sold: float, annual_kwh_by_source=None) -> float:
    cost = cfg.blended_cost
    if annual_kwh_by_source is not None:
        bought = sum(annual_kwh_by_source.values())
        energy_cost = cost * bought
    else:
        energy_cost = cost * annual_kwh_sold
    return cfg.tariff * annual_kwh_sold - energy_cost - cfg.annual_opex


def cumulative_cashflow(cfg: FinancialConfig, annual_kwh_sold: float, year: float,
                        annual_kwh_by_source=None) -> float:
    return -cfg.capex + year * annual_net(cfg, annual_kwh_sold, annual_kwh_by_source)


def breakeven_year(cfg: FinancialConfig, annual_kwh_sold: float, annual_kwh_by_source=None) -> Optional[float]:
    """Years until cumulative net cash covers capex; ``None`` means never.

    Annual flows are constant, so walking whole years and interpolating inside
    the crossing year is the same as ``capex / net``.
    """
    net = annual_net(cfg, annual_kwh_sold, annual_kwh_by_source)
    if net <= 0:
        return None
    if cfg.capex == 0:
        return 0.0
    whole = int(cfg.capex // net)
    remaining = cfg.capex - whole * net
    return whole + remaining / net


def cost_per_vehicle_km(consumption_kwh_per_km: float, blended_cost_per_kwh: float) -> float:
    if consumption_kwh_per_km < 0 or blended_cost_per_kwh < 0:
        raise ValueError("inputs must be >= 0")
    return consumption_kwh_per_km * blended_cost_per_kwh


def financial_block(econ, corridor_length_m: float, annual_kwh_sold: float,
                    annual_kwh_by_source: Mapping[str, float], cost_table: Mapping[str, float],
                    annual_vehicle_km: float) -> dict:
    """The ``financial`` section of ``summary.json``. Money is in ``econ.currency``."""
    capex = econ.capex_per_km * corridor_length_m / 1000.0
    blend = blended_cost(annual_kwh_by_source, cost_table)
    cfg = FinancialConfig(capex=capex, opex_frac=econ.opex_frac, tariff=econ.tariff, blended_cost=blend,
                          horizon_years=econ.horizon_years, currency=econ.currency)
    bought = sum(annual_kwh_by_source.values())
    vkm = econ.served_vehicle_km_per_day * 365.0 if econ.served_vehicle_km_per_day is not None \
        else annual_vehicle_km
    per_km = Money(cost_per_vehicle_km(econ.reference_consumption_kwh_per_km, blend), econ.currency)
    be = breakeven_year(cfg, annual_kwh_sold, annual_kwh_by_source)
    return {
        "currency": econ.currency,
        "capex": capex,
        "annual_opex": cfg.annual_opex,
        "annual_revenue": econ.tariff * annual_kwh_sold,
        "annual_energy_cost": blend * bought,
        "annual_kwh_sold": annual_kwh_sold,
        "blended_cost_per_kwh": blend,
        "breakeven_years": be,
        "cost_per_vehicle_km": per_km.value,
        "cost_per_vehicle_km_inr": per_km.to("INR", econ.usd_inr).value,
        "vehicle_km_per_year": vkm,
        "co2_tonnes": co2_savings(vkm, econ.emission_factor_kg_per_km),
        "energy_savings_gwh": energy_savings_gwh(vkm, econ.savings_kwh_per_km),
    }
