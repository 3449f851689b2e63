"""Traction battery: charge acceptance near the SoC ceiling, cycle wear, life estimate.

Wear is counted rainflow-lite: every contiguous discharge run (local SoC
maximum to the next local minimum) is one half-cycle of depth
``peak - trough`` and adds ``f0 * depth**alpha * 2**((T - 25) / 10)`` to the
stress integral. Health is ``1 - stress``; end of life is health 0.80.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NegativeEnergy, UnknownProfile

SOC_CEILING = 0.90
TAPER_START = 0.85
DEEP_SOC = 0.30
END_OF_LIFE_HEALTH = 0.80
CALENDAR_CAP_YEARS = 15.0

# Calibrated with scripts/calibrate_wear.py against the two reference duty
# profiles (static fast charge: 6 years, ERS in-motion charging: 9 years).
WEAR_F0 = 2.3524e-05
WEAR_ALPHA = 0.0864


@dataclass
class BatteryState:
    capacity_kwh: float
    soc: float
    temperature_c: float = 25.0
    health: float = 1.0
    efc: float = 0.0
    deep_discharges: int = 0
    throughput_kwh: float = 0.0
    stress: float = 0.0
    # wear-tracking carry between calls
    last_soc: Optional[float] = None
    run_peak: Optional[float] = None
    run_temp_sum: float = 0.0
    run_samples: int = 0

    def __post_init__(self):
        if self.capacity_kwh <= 0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError("SoC must lie in [0, 1]")


def acceptance_fraction(soc):
    """Instantaneous share of offered power the pack accepts: 1 up to 0.85, linear to 0 at 0.90."""
    return np.clip((SOC_CEILING - np.asarray(soc, dtype=float)) / (SOC_CEILING - TAPER_START), 0.0, 1.0)


def charge_accepted(soc, capacity_kwh, offered_kwh):
    """Energy accepted from ``offered_kwh``, integrating the taper exactly.

    In the taper band ``dSoC/dE = (0.90 - SoC) / (0.05 * capacity)``, so the
    remaining headroom decays exponentially with offered energy and the
    ceiling is approached but never crossed.
    """
    soc = np.asarray(soc, dtype=float)
    cap = np.asarray(capacity_kwh, dtype=float)
    offered = np.asarray(offered_kwh, dtype=float)
    full = np.minimum(offered, np.maximum(TAPER_START - soc, 0.0) * cap)
    s1 = soc + full / cap
    rest = offered - full
    head = np.maximum(SOC_CEILING - s1, 0.0)
    gained = head * -np.expm1(-rest / ((SOC_CEILING - TAPER_START) * cap))
    return full + gained * cap


def apply_charge(battery: BatteryState, energy_kwh: float, charge_power_kw: float | None = None):
    """Offer ``energy_kwh`` to the pack; returns ``(updated battery, accepted kWh)``.

    The taper depends on energy offered, not on power, so ``charge_power_kw``
    does not change the result; it is kept for callers that track sessions by
    power.
    """
    if energy_kwh < 0:
        raise NegativeEnergy(f"offered energy must be >= 0, got {energy_kwh}")
    accepted = float(charge_accepted(battery.soc, battery.capacity_kwh, energy_kwh))
    soc = min(battery.soc + accepted / battery.capacity_kwh, max(battery.soc, SOC_CEILING))
    return dataclasses.replace(battery, soc=soc), accepted


def half_cycle_stress(depth, temperature_c, f0: float = WEAR_F0, alpha: float = WEAR_ALPHA):
    return f0 * np.power(np.asarray(depth, dtype=float), alpha) * np.power(
        2.0, (np.asarray(temperature_c, dtype=float) - 25.0) / 10.0)


def update_battery_wear(battery: BatteryState, soc_trace, temperature_c,
                        f0: float = WEAR_F0, alpha: float = WEAR_ALPHA) -> BatteryState:
    """Fold a time-ordered SoC trace into the wear counters.

    A discharge run still open at the end of the trace is carried over to the
    next call; :func:`close_open_run` settles it.
    """
    s = np.asarray(soc_trace, dtype=float).ravel()
    if s.size == 0:
        return battery
    temps = np.broadcast_to(np.asarray(temperature_c, dtype=float), s.shape)
    if battery.last_soc is not None:
        s = np.concatenate([[battery.last_soc], s])
        temps = np.concatenate([[temps[0]], temps])
    keep = np.concatenate([[True], np.diff(s) != 0])
    pos = np.flatnonzero(keep)
    sk = s[keep]
    ctemp = np.concatenate([[0.0], np.cumsum(temps)])

    b = dataclasses.replace(battery, last_soc=float(s[-1]))
    if sk.size < 2:
        if b.run_peak is not None:
            b.run_temp_sum += float(temps.sum())
            b.run_samples += temps.size
        return b

    d = np.diff(sk)
    b.deep_discharges += int(np.count_nonzero((sk[:-1] >= DEEP_SOC) & (sk[1:] < DEEP_SOC)))
    drop = float(-d[d < 0].sum())
    b.efc += drop
    b.throughput_kwh += drop * b.capacity_kwh

    sign = np.sign(d)
    turns = np.flatnonzero(sign[1:] != sign[:-1]) + 1
    points = np.concatenate([[0], turns, [sk.size - 1]])
    depths, run_temps = [], []
    for a, z in zip(points[:-1], points[1:]):
        lo_i, hi_i = pos[a], pos[z]
        tsum = ctemp[hi_i + 1] - ctemp[lo_i]
        count = hi_i + 1 - lo_i
        if sign[a] > 0:
            if a == 0 and b.run_peak is not None:
                # an open run from the previous call ends at the first sample
                depths.append(b.run_peak - sk[0])
                run_temps.append(b.run_temp_sum / max(b.run_samples, 1))
                b.run_peak, b.run_temp_sum, b.run_samples = None, 0.0, 0
            continue
        peak = sk[a]
        if a == 0 and b.run_peak is not None:
            peak = b.run_peak
            tsum += b.run_temp_sum
            count += b.run_samples
        if z == sk.size - 1:
            b.run_peak, b.run_temp_sum, b.run_samples = float(peak), float(tsum), int(count)
        else:
            depths.append(peak - sk[z])
            run_temps.append(tsum / count)
            if a == 0:
                b.run_peak, b.run_temp_sum, b.run_samples = None, 0.0, 0
    if sign[-1] > 0 and b.run_peak is not None and points[-2] != 0:
        b.run_peak, b.run_temp_sum, b.run_samples = None, 0.0, 0
    if depths:
        add = float(np.sum(half_cycle_stress(depths, run_temps, f0, alpha)))
        b.stress += add
        b.health = max(1.0 - b.stress, 1e-12)
    return b


def close_open_run(battery: BatteryState, f0: float = WEAR_F0, alpha: float = WEAR_ALPHA) -> BatteryState:
    if battery.run_peak is None or battery.last_soc is None:
        return battery
    depth = battery.run_peak - battery.last_soc
    temp = battery.run_temp_sum / max(battery.run_samples, 1)
    b = dataclasses.replace(battery, run_peak=None, run_temp_sum=0.0, run_samples=0)
    if depth > 0:
        b.stress += float(half_cycle_stress(depth, temp, f0, alpha))
        b.health = max(1.0 - b.stress, 1e-12)
    return b


class WearTracker:
    """Per-sample wear counting for many vehicles at once (same rule as :func:`update_battery_wear`).

    State lives in one ``(7, n)`` array so that rows can be appended and
    dropped cheaply while vehicles come and go.
    """

    _FIELDS = ("last", "run_peak", "run_tsum", "run_n", "stress", "deep", "efc")
    _FILL = (np.nan, np.nan, 0.0, 0.0, 0.0, 0.0, 0.0)

    def __init__(self, n: int = 0, f0: float = WEAR_F0, alpha: float = WEAR_ALPHA):
        self.f0, self.alpha = f0, alpha
        self._a = self._blank(n)

    def _blank(self, n):
        return np.array(self._FILL, dtype=float)[:, None].repeat(n, axis=1)

    def __len__(self):
        return self._a.shape[1]

    last = property(lambda self: self._a[0])
    run_peak = property(lambda self: self._a[1])
    run_tsum = property(lambda self: self._a[2])
    run_n = property(lambda self: self._a[3])
    stress = property(lambda self: self._a[4])
    efc = property(lambda self: self._a[6])

    @property
    def deep(self) -> np.ndarray:
        return self._a[5].astype(np.int64)

    def start(self, idx, soc):
        self._a[0, idx] = soc

    def extend(self, soc) -> None:
        """Append rows for new vehicles starting at ``soc``."""
        rows = self._blank(len(soc))
        rows[0] = soc
        self._a = np.concatenate([self._a, rows], axis=1)

    def keep(self, mask) -> dict:
        """Drop the rows where ``mask`` is False and return their final counters."""
        gone = self._a[:, ~mask]
        self._a = self._a[:, mask]
        return {"stress": gone[4], "deep": gone[5].astype(np.int64), "efc": gone[6]}

    def update(self, idx, soc_new, temperature_c):
        """Advance rows ``idx`` (all rows when ``None``) to ``soc_new``."""
        if isinstance(idx, slice):
            idx = np.arange(*idx.indices(len(self)))
        a = self._a if idx is None else self._a[:, idx]
        last, peak, tsum, n = a[0], a[1], a[2], a[3]
        open_run = ~np.isnan(peak)
        start = (soc_new < last) & ~open_run
        peak = np.where(start, last, peak)
        running = open_run | start
        tsum = np.where(start, temperature_c, np.where(running, tsum + temperature_c, tsum))
        n = np.where(start, 1.0, n + running)
        close = (soc_new > last) & running
        if close.any():
            depth = (peak - last)[close]
            a[4, close] += half_cycle_stress(depth, (tsum / np.maximum(n, 1))[close], self.f0, self.alpha)
            peak = np.where(close, np.nan, peak)
            tsum = np.where(close, 0.0, tsum)
            n = np.where(close, 0.0, n)
        a[5] += (last >= DEEP_SOC) & (soc_new < DEEP_SOC)
        a[6] += np.maximum(last - soc_new, 0.0)
        a[0], a[1], a[2], a[3] = soc_new, peak, tsum, n
        if idx is not None:
            self._a[:, idx] = a


# --------------------------------------------------------------------------- duty profiles

@dataclass(frozen=True)
class DutyProfile:
    name: str
    pack_temp_c: float
    depot_trigger: float = 0.20
    depot_target: float = 0.90
    ers_low: Optional[float] = None
    ers_high: Optional[float] = None
    ers_day_share: float = 0.0
    ers_charge_kw: float = 12.0
    km_per_day: float = 198.0
    consumption_kwh_per_km: float = 0.15
    capacity_kwh: float = 50.0
    drive_hours: tuple = (6, 22)
    steps_per_hour: int = 4


# A fleet taxi covering 198 km/day at 0.15 kWh/km uses 0.594 of a 50 kWh pack
# per day. The ERS vehicle has corridor access on 240 of 365 days.
REFERENCE_PROFILES = {
    "static-fast-charge": DutyProfile("static-fast-charge", pack_temp_c=47.5,
                                      depot_trigger=0.20, depot_target=0.90),
    "ers-dynamic": DutyProfile("ers-dynamic", pack_temp_c=34.0, depot_trigger=0.20,
                               depot_target=0.75, ers_low=0.45, ers_high=0.75,
                               ers_day_share=240 / 365),
    "idle": DutyProfile("idle", pack_temp_c=25.0, km_per_day=0.0),
}


def ers_day(day: int, share: float) -> bool:
    """Evenly spread ERS-access days: exactly ``round(share * n)`` of any ``n`` leading days."""
    return math.floor((day + 1) * share + 1e-9) > math.floor(day * share + 1e-9)


def daily_trace(profile: DutyProfile, day: int, soc: float) -> tuple[np.ndarray, float]:
    """SoC samples for one day (``24 * steps_per_hour`` values) and the closing SoC."""
    sph = profile.steps_per_hour
    dt_h = 1.0 / sph
    start_h, end_h = profile.drive_hours
    drive_steps = (end_h - start_h) * sph
    use = profile.km_per_day * profile.consumption_kwh_per_km / profile.capacity_kwh / max(drive_steps, 1)
    ers_today = profile.ers_low is not None and ers_day(day, profile.ers_day_share)
    gain = profile.ers_charge_kw * dt_h / profile.capacity_kwh
    charging = False
    out = np.empty(24 * sph)
    for i in range(24 * sph):
        if start_h * sph <= i < end_h * sph and use > 0:
            soc -= use
            if ers_today:
                if soc <= profile.ers_low:
                    charging = True
                if charging:
                    soc += gain
                    if soc >= profile.ers_high:
                        soc = profile.ers_high
                        charging = False
            if soc <= profile.depot_trigger:
                out[i] = soc
                soc = profile.depot_target
                continue
        out[i] = soc
    return out, soc


@dataclass(frozen=True)
class LifeEstimate:
    years: float
    deep_per_year: float
    efc_per_year: float
    capped: bool


def resolve_profile(profile, scenario=None) -> DutyProfile:
    if isinstance(profile, DutyProfile):
        base = profile
    elif profile in REFERENCE_PROFILES:
        base = REFERENCE_PROFILES[profile]
    else:
        raise UnknownProfile(f"unknown duty profile {profile!r}; known: {sorted(REFERENCE_PROFILES)}")
    cfg = getattr(scenario, "battery", None)
    if cfg is not None and base.km_per_day > 0:
        base = dataclasses.replace(base, capacity_kwh=cfg.capacity_kwh, km_per_day=cfg.km_per_day,
                                   consumption_kwh_per_km=cfg.consumption_kwh_per_km)
    return base


def estimate_battery_life(profile, scenario=None, f0: float | None = None,
                          alpha: float | None = None) -> LifeEstimate:
    """Simulate daily operation until health reaches 0.80, capped at 15 years.

    ``profile`` is a reference profile name, a :class:`DutyProfile`, or a
    ``(soc_trace, temperature_c)`` pair describing one day that is repeated.
    """
    cfg = getattr(scenario, "battery", None)
    f0 = f0 if f0 is not None else (cfg.f0 if cfg is not None and cfg.f0 is not None else WEAR_F0)
    alpha = alpha if alpha is not None else (cfg.alpha if cfg is not None and cfg.alpha is not None
                                             else WEAR_ALPHA)
    max_days = int(CALENDAR_CAP_YEARS * 365)

    if isinstance(profile, tuple):
        trace, temp = np.asarray(profile[0], dtype=float), profile[1]
        next_day = lambda day, soc: (trace, float(trace[-1]))  # noqa: E731
        cap = 1.0
        start_soc = float(trace[0])
    else:
        prof = resolve_profile(profile, scenario)
        temp = prof.pack_temp_c
        next_day = lambda day, soc: daily_trace(prof, day, soc)  # noqa: E731
        cap = prof.capacity_kwh
        start_soc = prof.depot_target

    b = BatteryState(capacity_kwh=cap, soc=start_soc, temperature_c=float(np.mean(temp)))
    soc = start_soc
    days = max_days
    for day in range(max_days):
        trace, soc = next_day(day, soc)
        before = b.stress
        b = update_battery_wear(b, trace, temp, f0, alpha)
        if 1.0 - b.stress <= END_OF_LIFE_HEALTH:
            need = (1.0 - END_OF_LIFE_HEALTH) - before
            days = day + need / (b.stress - before)
            break
    simulated = max(math.ceil(days), 1)
    years = days / 365.0
    capped = years >= CALENDAR_CAP_YEARS
    return LifeEstimate(years=min(years, CALENDAR_CAP_YEARS),
                        deep_per_year=b.deep_discharges * 365.0 / simulated,
                        efc_per_year=b.efc * 365.0 / simulated, capped=capped)
