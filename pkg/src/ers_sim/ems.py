"""Energy management: PV availability, demand forecasting, merit-order dispatch, droop grid model, shedding."""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import InsufficientHistory

DAY_S = 86400.0
SOURCES = ("solar", "buffer", "grid_offpeak", "grid_peak", "v2g")
# shedding order: lowest number is shed first
SHED_PRIORITY = {"private_car": 0, "delivery_van": 1, "taxi": 2, "bus": 3}


# --------------------------------------------------------------------------- solar

def declination_rad(day_of_year) -> np.ndarray:
    return np.radians(23.44) * np.sin(2 * np.pi * (284 + np.asarray(day_of_year, dtype=float)) / 365.0)


def day_length_h(day_of_year, latitude_deg: float = 28.6) -> np.ndarray:
    x = -math.tan(math.radians(latitude_deg)) * np.tan(declination_rad(day_of_year))
    return 24.0 / np.pi * np.arccos(np.clip(x, -1.0, 1.0))


@dataclass(frozen=True)
class SolarModel:
    """Half-sine irradiance between sunrise and sunset, scaled to a fixed annual total (kWh/m²)."""

    annual_kwh_m2: float = 2200.0
    latitude_deg: float = 28.6

    @functools.cached_property
    def peak_kw_m2(self) -> float:
        days = np.arange(1, 366)
        daily_per_peak = 2.0 * day_length_h(days, self.latitude_deg) / np.pi
        return self.annual_kwh_m2 / float(daily_per_peak.sum())

    def irradiance(self, time_of_day_s, day_of_year) -> np.ndarray:
        d = day_length_h(day_of_year, self.latitude_deg)
        t_h = np.asarray(time_of_day_s, dtype=float) / 3600.0
        sunrise = 12.0 - d / 2.0
        with np.errstate(invalid="ignore", divide="ignore"):
            phase = np.where(d > 0, (t_h - sunrise) / d, -1.0)
        g = np.where((phase > 0) & (phase < 1), np.sin(np.pi * phase), 0.0)
        return self.peak_kw_m2 * g


def solar_available(time_of_day_s, day_of_year, area_m2: float, efficiency: float,
                    model: SolarModel = SolarModel()) -> np.ndarray:
    """PV output in kW."""
    if area_m2 < 0:
        raise ValueError("PV area must be >= 0")
    return model.irradiance(time_of_day_s, day_of_year) * area_m2 * efficiency


# --------------------------------------------------------------------------- forecasting

def forecast_accuracy(predicted, realized) -> float:
    """100 - MAPE in percent, skipping hours whose realized value is below 1% of the peak."""
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(realized, dtype=float)
    if y.size == 0 or np.max(y) <= 0:
        return float("nan")
    mask = y >= 0.01 * np.max(y)
    mape = 100.0 * np.mean(np.abs(p[mask] - y[mask]) / y[mask])
    return float(np.clip(100.0 - mape, 0.0, 100.0))


@dataclass(frozen=True)
class Forecast:
    values: np.ndarray
    accuracy: Optional[float] = None

    def evaluate(self, realized) -> "Forecast":
        return dataclasses.replace(self, accuracy=forecast_accuracy(self.values, realized[:len(self.values)]))


class Forecaster(Protocol):
    def forecast(self, history: Sequence[float], horizon_h: int) -> Forecast: ...


@dataclass(frozen=True)
class SeasonalSmoothingForecaster:
    """Blend of yesterday's value and an hour-of-day exponential smooth.

    ``yhat(t) = beta * y(t - 24) + (1 - beta) * s_h(t)``, where ``s_h`` is the
    exponentially smoothed level of the same hour of day.
    """

    beta: float = 0.6
    smoothing: float = 0.3
    period: int = 24
    min_history: int = 48

    def forecast(self, history, horizon_h: int = 24) -> Forecast:
        y = np.asarray(history, dtype=float)
        if y.size < self.min_history:
            raise InsufficientHistory(f"need >= {self.min_history} h of history, got {y.size}")
        n, p = y.size, self.period
        level = np.full(p, np.nan)
        for t in range(n):
            h = t % p
            level[h] = y[t] if np.isnan(level[h]) else self.smoothing * y[t] + (1 - self.smoothing) * level[h]
        ext = list(y)
        out = np.empty(horizon_h)
        for j in range(horizon_h):
            t = n + j
            out[j] = max(0.0, self.beta * ext[t - p] + (1 - self.beta) * level[t % p])
            ext.append(out[j])
        return Forecast(out)


def forecast_demand(history, horizon_h: int = 24, forecaster: Forecaster | None = None) -> Forecast:
    return (forecaster or SeasonalSmoothingForecaster()).forecast(history, horizon_h)


# --------------------------------------------------------------------------- dispatch

@dataclass
class BufferState:
    capacity_kwh: float = 0.0
    stored_kwh: float = 0.0
    max_kw: float = 0.0
    rte: float = 0.90

    def __post_init__(self):
        if not 0 <= self.stored_kwh <= self.capacity_kwh + 1e-12:
            raise ValueError("buffer stored energy must lie in [0, capacity]")


@dataclass(frozen=True)
class SourceMix:
    """Average kW over one dispatch interval."""

    solar: float = 0.0
    buffer: float = 0.0
    grid_offpeak: float = 0.0
    grid_peak: float = 0.0
    v2g: float = 0.0
    deficit: float = 0.0
    buffer_charge: float = 0.0
    curtailed: float = 0.0

    @property
    def supply(self) -> float:
        return self.solar + self.buffer + self.grid_offpeak + self.grid_peak + self.v2g

    def shares(self) -> dict:
        tot = self.supply
        return {k: (getattr(self, k) / tot if tot > 0 else 0.0) for k in SOURCES}


def dispatch(demand_kw: float, solar_kw: float, buffer: BufferState | None = None,
             grid_offpeak_kw: float = 0.0, grid_peak_kw: float = 0.0, v2g_kw: float = 0.0,
             dt_s: float = 1.0) -> tuple[SourceMix, BufferState]:
    """Merit order solar, buffer, off-peak grid, peak grid, V2G; leftover is deficit."""
    if min(demand_kw, solar_kw, grid_offpeak_kw, grid_peak_kw, v2g_kw) < 0:
        raise ValueError("availabilities and demand must be >= 0")
    buf = dataclasses.replace(buffer) if buffer is not None else BufferState()
    dt_h = dt_s / 3600.0
    rest = demand_kw
    solar = min(rest, solar_kw)
    rest -= solar
    dis = 0.0
    if rest > 0 and buf.stored_kwh > 0 and buf.max_kw > 0:
        dis = min(rest, buf.max_kw, buf.stored_kwh * buf.rte / dt_h)
        buf.stored_kwh = max(0.0, buf.stored_kwh - dis * dt_h / buf.rte)
        rest -= dis
    off = min(rest, grid_offpeak_kw)
    rest -= off
    peak = min(rest, grid_peak_kw)
    rest -= peak
    v2g = min(rest, v2g_kw)
    rest -= v2g
    surplus = solar_kw - solar
    charge = 0.0
    if surplus > 0 and buf.max_kw > 0:
        charge = max(0.0, min(surplus, buf.max_kw, (buf.capacity_kwh - buf.stored_kwh) / dt_h))
        buf.stored_kwh = min(buf.capacity_kwh, buf.stored_kwh + charge * dt_h)
    mix = SourceMix(solar=solar, buffer=dis, grid_offpeak=off, grid_peak=peak, v2g=v2g,
                    deficit=max(rest, 0.0), buffer_charge=charge, curtailed=surplus - charge)
    return mix, buf


def is_offpeak(time_of_day_s, start_h: float = 22.0, end_h: float = 6.0):
    h = (np.asarray(time_of_day_s, dtype=float) / 3600.0) % 24.0
    if start_h <= end_h:
        return (h >= start_h) & (h < end_h)
    return (h >= start_h) | (h < end_h)


def v2g_available(time_of_day_s, buses: int, kw_per_bus: float = 50.0, windows=((10.0, 16.0),)):
    h = (np.asarray(time_of_day_s, dtype=float) / 3600.0) % 24.0
    inside = np.zeros(np.shape(h), dtype=bool)
    for a, b in windows:
        inside |= (h >= a) & (h < b) if a <= b else (h >= a) | (h < b)
    return np.where(inside, buses * kw_per_bus, 0.0)


# --------------------------------------------------------------------------- grid

@dataclass(frozen=True)
class GridState:
    capacity_kw: float
    nominal_hz: float = 50.0
    freq_dev: float = 0.0
    volt_dev: float = 0.0
    shed_kw: float = 0.0
    freq_droop: float = 0.04
    volt_droop: float = 0.03

    @property
    def frequency_hz(self) -> float:
        return self.nominal_hz * (1.0 + self.freq_dev)


def update_grid(grid: GridState, supply_kw: float, demand_kw: float, dt_s: float = 0.0,
                shed_kw: float | None = None) -> GridState:
    """Static droop: deviation proportional to the unserved share of connection capacity."""
    if grid.capacity_kw <= 0:
        raise ValueError("grid capacity must be positive")
    ratio = (demand_kw - supply_kw) / grid.capacity_kw
    return dataclasses.replace(grid, freq_dev=-grid.freq_droop * ratio, volt_dev=-grid.volt_droop * ratio,
                               shed_kw=grid.shed_kw if shed_kw is None else shed_kw)


def shed_required_kw(deficit_kw: float, capacity_kw: float, trigger: float = 0.012, droop: float = 0.04) -> float:
    """Load to drop so the frequency deviation returns to the trigger level."""
    return max(0.0, deficit_kw - trigger * capacity_kw / droop)


@dataclass(frozen=True)
class ShedResult:
    segments: list
    shed_kw: float
    alarm: bool


def shed_order(classes, power_kw) -> np.ndarray:
    """Index order for shedding: lowest class priority first, then larger loads, then index."""
    pri = np.array([SHED_PRIORITY[c] if isinstance(c, str) else int(c) for c in classes], dtype=np.int64)
    pw = np.asarray(power_kw, dtype=float)
    return np.lexsort((np.arange(len(pw)), -pw, pri))


def shed_load(active_segments, required_kw: float) -> ShedResult:
    """Deactivate segments until ``required_kw`` is shed.

    ``active_segments`` is a sequence of ``(segment_id, served_class, power_kw)``.
    """
    if required_kw < 0:
        raise ValueError("required shed must be >= 0")
    if required_kw == 0 or not active_segments:
        return ShedResult([], 0.0, required_kw > 0)
    ids = [s[0] for s in active_segments]
    order = shed_order([s[1] for s in active_segments], [s[2] for s in active_segments])
    chosen, shed = [], 0.0
    for i in order:
        if shed >= required_kw:
            break
        chosen.append(ids[i])
        shed += float(active_segments[i][2])
    return ShedResult(chosen, shed, shed < required_kw)
