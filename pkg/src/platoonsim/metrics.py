"""Run-level performance metrics and the power-based fuel model.

All metrics are computed over the post-warm-up window. Fleet aggregates
pool the underlying samples (RMS pools squares; never an average of
per-vehicle RMS values). Fuel uses a power-based model: traction power from
rolling/drag resistance plus inertia, mapped through a quadratic to a fuel
rate, with the idle rate applied whenever traction power is non-positive.
Coefficients are documented defaults for a mid-size sedan; all fuel
comparisons in the acceptance suite are relative, never absolute liters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FuelModelParams:
    c0: float = 4.8e-4        # idle fuel rate, L/s
    c1: float = 7.0e-5        # L/s per kW
    c2: float = 5.0e-7        # L/s per kW^2
    mass: float = 1500.0      # kg
    rolling_coeff: float = 0.015
    drag_area: float = 0.70   # Cd * A, m^2
    air_density: float = 1.225
    driveline_eff: float = 0.9
    gravity: float = 9.81

    def __post_init__(self) -> None:
        if self.c0 <= 0:
            raise ValueError("idle rate c0 must be positive")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be nonnegative")


def traction_power_kw(speed, accel, params: FuelModelParams):
    """Traction power in kW; negative while braking/coasting downgrade."""
    speed = np.asarray(speed, dtype=float)
    resist = (params.mass * params.gravity * params.rolling_coeff
              + 0.5 * params.air_density * params.drag_area * speed * speed)
    force = resist + params.mass * np.asarray(accel, dtype=float)
    return force * speed / params.driveline_eff / 1000.0


def fuel_rate(speed, accel, params: FuelModelParams):
    """Fuel rate in L/s: c0 + c1*P + c2*P^2 for positive power, else idle c0."""
    p = traction_power_kw(speed, accel, params)
    rate = params.c0 + params.c1 * p + params.c2 * p * p
    return np.where(p > 0.0, rate, params.c0)


def utilization(mode_trace: np.ndarray, cacc_code: int, caccu_code: int) -> tuple[float, float]:
    """Fractions of steps spent in each cooperative mode."""
    n = mode_trace.size
    if n == 0:
        raise ValueError("empty mode trace")
    return (float(np.count_nonzero(mode_trace == cacc_code) / n),
            float(np.count_nonzero(mode_trace == caccu_code) / n))


def max_unsafe_spacing(spacing_error_trace: np.ndarray) -> float:
    """Largest undershoot below the desired spacing; 0 if never closer."""
    if spacing_error_trace.size == 0:
        return 0.0
    worst = float(np.min(spacing_error_trace))
    return max(-worst, 0.0)


def accel_rms(accel_trace: np.ndarray) -> float:
    """Root mean square of realized accelerations; pools all samples given."""
    accel_trace = np.asarray(accel_trace, dtype=float)
    if accel_trace.size == 0:
        raise ValueError("empty acceleration trace")
    return float(np.sqrt(np.mean(np.square(accel_trace))))


@dataclass(frozen=True)
class ScopeMetrics:
    """Metrics over one vehicle scope (automated-only or whole follower fleet)."""

    accel_rms: float
    min_speed: float
    fuel_total: float       # L, summed over vehicles and steps
    fuel_rate_mean: float   # L/s, mean over vehicle-steps
    fuel_per_km: float      # L/km over the pooled distance traveled


@dataclass(frozen=True)
class RunMetrics:
    utilization_cacc: float
    utilization_caccu: float
    max_unsafe_spacing: float
    automated: ScopeMetrics
    fleet: ScopeMetrics
    n_lane_changes: int = 0
    collided: bool = False

    @property
    def utilization_coop(self) -> float:
        return self.utilization_cacc + self.utilization_caccu


def scope_metrics(speed: np.ndarray, accel: np.ndarray, dt: float,
                  fuel: FuelModelParams) -> ScopeMetrics:
    """Pool (steps, vehicles) speed/accel arrays into one scope's metrics."""
    rates = fuel_rate(speed, accel, fuel)
    total = float(np.sum(rates) * dt)
    dist_km = float(np.sum(speed) * dt / 1000.0)
    return ScopeMetrics(
        accel_rms=accel_rms(accel),
        min_speed=float(np.min(speed)),
        fuel_total=total,
        fuel_rate_mean=float(np.mean(rates)),
        fuel_per_km=total / dist_km if dist_km > 0 else np.nan,
    )


def compute_run_metrics(mode_trace: np.ndarray, spacing_err: np.ndarray,
                        speed: np.ndarray, accel: np.ndarray,
                        automated_mask: np.ndarray, dt: float,
                        fuel: FuelModelParams, cacc_code: int, caccu_code: int,
                        n_lane_changes: int = 0,
                        collided: bool = False) -> RunMetrics:
    """Assemble RunMetrics from post-warm-up traces.

    Arrays are (steps, vehicles) over follower vehicles only (prescribed
    leads excluded); spacing_err and mode_trace carry NaN / mode codes only
    for automated vehicles.
    """
    auto = automated_mask
    if np.any(auto):
        u_cacc, u_caccu = utilization(mode_trace[:, auto], cacc_code, caccu_code)
        unsafe = max_unsafe_spacing(spacing_err[:, auto][np.isfinite(spacing_err[:, auto])])
        auto_scope = scope_metrics(speed[:, auto], accel[:, auto], dt, fuel)
    else:
        u_cacc = u_caccu = 0.0
        unsafe = 0.0
        auto_scope = ScopeMetrics(np.nan, np.nan, 0.0, np.nan, np.nan)
    fleet_scope = scope_metrics(speed, accel, dt, fuel)
    return RunMetrics(
        utilization_cacc=u_cacc,
        utilization_caccu=u_caccu,
        max_unsafe_spacing=unsafe,
        automated=auto_scope,
        fleet=fleet_scope,
        n_lane_changes=n_lane_changes,
        collided=collided,
    )
