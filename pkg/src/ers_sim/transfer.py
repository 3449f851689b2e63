"""Power transfer between an energized coil and a moving receiver.

Delivered power is the product of five factors::

    P = min(P_peak, P_receiver) * eta(v) * misalignment(x) * derate(T) * duty(v)

``eta`` is the end-to-end coupling effectiveness as a function of speed
(piecewise linear, plateau 0.90 over 45-60 km/h). ``duty`` is a thermal duty
limiter: the coil transmits only a fraction ``v / v_ref`` of the dwell time
below the reference speed. Without it, energy per unit distance would grow
without bound as the vehicle slows down; with it, energy per distance peaks at
medium speed.

For a vehicle at constant speed over a corridor whose energized spans cover a
fraction ``coverage`` of its length, the energy per distance has the closed
form implemented by :func:`energy_per_distance`. The full simulator is checked
against it.

All functions accept scalars or numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroSpeed

DEFAULT_EFFICIENCY_NODES = ((20.0, 0.625), (45.0, 0.90), (60.0, 0.90), (70.0, 0.875))


@dataclass(frozen=True)
class TransferParams:
    peak_kw: float = 100.0  # both rows combined
    coverage: float = 0.72
    efficiency_nodes: tuple = DEFAULT_EFFICIENCY_NODES
    duty_ref_kmh: float = 50.0
    misalignment_cutoff_m: float = 0.3
    derate_start_c: float = 80.0
    cutoff_c: float = 100.0
    _speeds: np.ndarray = field(init=False, repr=False, compare=False)
    _etas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple((float(s), float(e)) for s, e in self.efficiency_nodes)
        speeds = np.array([s for s, _ in nodes])
        etas = np.array([e for _, e in nodes])
        if len(nodes) < 1 or np.any(np.diff(speeds) <= 0):
            raise ValueError("efficiency nodes must be strictly increasing in speed")
        if np.any(etas <= 0) or np.any(etas >= 1):
            raise ValueError("efficiency values must lie in (0, 1)")
        if not 0 < self.coverage <= 1:
            raise ValueError("coverage must lie in (0, 1]")
        object.__setattr__(self, "efficiency_nodes", nodes)
        object.__setattr__(self, "_speeds", speeds)
        object.__setattr__(self, "_etas", etas)


DEFAULT_PARAMS = TransferParams()


def coupling_efficiency(speed_kmh, params: TransferParams = DEFAULT_PARAMS):
    """Piecewise-linear efficiency through the configured nodes, clamped at the ends."""
    return np.interp(speed_kmh, params._speeds, params._etas)


def duty_factor(speed_kmh, params: TransferParams = DEFAULT_PARAMS):
    return np.clip(np.asarray(speed_kmh, dtype=float) / params.duty_ref_kmh, 0.0, 1.0)


def misalignment_factor(offset_m, params: TransferParams = DEFAULT_PARAMS):
    x = np.asarray(offset_m, dtype=float) / params.misalignment_cutoff_m
    return np.maximum(0.0, 1.0 - x * x)


def thermal_derate(temp_c, params: TransferParams = DEFAULT_PARAMS):
    """1 below the derate threshold, linear down to 0 at the cutoff temperature."""
    span = params.cutoff_c - params.derate_start_c
    return np.clip((params.cutoff_c - np.asarray(temp_c, dtype=float)) / span, 0.0, 1.0)


def transmitted_power(speed_kmh, temp_c, receiver_kw, params: TransferParams = DEFAULT_PARAMS):
    """Power drawn by the coil while coupled to a receiver (before coupling losses)."""
    cap = np.minimum(params.peak_kw, receiver_kw)
    return cap * thermal_derate(temp_c, params) * duty_factor(speed_kmh, params)


def delivered_power(speed_kmh, offset_m, temp_c, receiver_kw,
                    params: TransferParams = DEFAULT_PARAMS, active=True):
    """Instantaneous power into the vehicle receiver, kW.

    ``active`` is the segment's energized flag (Active or Derated); inactive
    segments deliver nothing.
    """
    p = (transmitted_power(speed_kmh, temp_c, receiver_kw, params)
         * coupling_efficiency(speed_kmh, params)
         * misalignment_factor(offset_m, params))
    return np.where(active, p, 0.0) if np.ndim(p) or np.ndim(active) else (float(p) if active else 0.0)


def energy_per_distance(speed_kmh: float, distance_km: float,
                        params: TransferParams = DEFAULT_PARAMS) -> float:
    """Closed-form energy (kWh) picked up over ``distance_km`` at constant speed."""
    if speed_kmh <= 0:
        raise ZeroSpeed("energy per distance is undefined at zero speed")
    hours = distance_km / speed_kmh
    return float(params.peak_kw * params.coverage * coupling_efficiency(speed_kmh, params)
                 * duty_factor(speed_kmh, params) * hours)


def efficiency_curve(speeds_kmh, params: TransferParams = DEFAULT_PARAMS) -> list[dict]:
    """Rows for ``efficiency_curve.csv``: speed_kmh, eta, duty, e_per_2km_kwh."""
    return [
        {
            "speed_kmh": float(v),
            "eta": float(coupling_efficiency(v, params)),
            "duty": float(duty_factor(v, params)),
            "e_per_2km_kwh": energy_per_distance(float(v), 2.0, params),
        }
        for v in speeds_kmh
    ]
