"""Longitudinal planners for automated vehicles.

Three planners share one PD spacing law on the constant-time-headway
policy and differ only in the feed-forward term:

* plain radar planner (no feed-forward),
* cooperative planner: the first predecessor's communicated acceleration
  through a unity-DC first-order filter,
* mixed cooperative planner: the second predecessor's communicated
  acceleration through the same filter, used when the first predecessor is
  unconnected but the one ahead of it broadcasts.

The filter time constant equals the desired time headway, which gives zero
steady-state spacing error for constant leader acceleration.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class PlannerMode(enum.Enum):
    ACC = "acc"
    CACC = "cacc"
    CACCU = "caccu"


# verdict codes shared with the identification module
PENDING, CONNECTED, UNCONNECTED = 0, 1, 2


@dataclass(frozen=True)
class ControllerParams:
    """Planner gains; identical across all three planners by design."""

    k_p: float = 0.3
    k_d: float = 0.7
    T_h: float = 1.2           # desired time headway, s
    alpha: float = 0.76        # human gain on spacing (acceleration estimate)
    beta: float = 0.51         # human gain on speed difference
    T_ovm: float = 0.57        # optimal-velocity headway, s
    ff_time_constant: float | None = None  # defaults to T_h
    u_min: float = -8.0        # command saturation, m/s^2
    u_max: float = 4.0

    def __post_init__(self) -> None:
        for name in ("k_p", "k_d", "T_h", "alpha", "beta", "T_ovm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def ff_tc(self) -> float:
        return self.T_h if self.ff_time_constant is None else self.ff_time_constant


@dataclass
class FilterState:
    """State of the discrete feed-forward filter (one scalar)."""

    y: float = 0.0

    def reset(self) -> None:
        self.y = 0.0


def spacing_error(h, v, T_h: float):
    """e = h - T_h * v. Accepts scalars or arrays."""
    return h - T_h * v


def acc_command(e, e_dot, params: ControllerParams):
    """PD law: u = k_p * e + k_d * e_dot."""
    return params.k_p * e + params.k_d * e_dot


def filter_coefficient(dt: float, time_constant: float) -> float:
    """Exact zero-order-hold coefficient 1 - exp(-dt/T) of the lag filter.

    The exponential form keeps the discrete step response on the continuous
    curve at sample times, unlike forward Euler whose error at t = T is
    about 0.016 at dt = 0.1.
    """
    return 1.0 - np.exp(-dt / time_constant)


def feedforward_step(input_accel: float, state: FilterState, dt: float,
                     params: ControllerParams) -> float:
    """Advance the unity-DC first-order feed-forward filter, return output."""
    state.y += filter_coefficient(dt, params.ff_tc) * (input_accel - state.y)
    return state.y


def cacc_command(e: float, e_dot: float, leader_accel: float, filt: FilterState,
                 dt: float, params: ControllerParams) -> float:
    """PD spacing law plus filtered communicated first-predecessor acceleration."""
    return float(acc_command(e, e_dot, params) + feedforward_step(leader_accel, filt, dt, params))


def ovm_accel_estimate(h, v, dv_lead, params: ControllerParams):
    """Linearized optimal-velocity estimate of an observed vehicle's acceleration.

    alpha * (h / T_ovm - v) + beta * dv_lead, where h and v are the observed
    vehicle's gap and speed and dv_lead is its leader's speed minus its own.
    Exact only near the optimal-velocity equilibrium h = T_ovm * v; against
    drivers holding longer headways the absolute form carries a large bias,
    which is why the mixed planner feeds forward the communicated
    acceleration instead (see caccu_command).
    """
    return params.alpha * (h / params.T_ovm - v) + params.beta * dv_lead


def caccu_command(e: float, e_dot: float, lead2_accel: float,
                  est_lead1_accel: float, filt: FilterState, dt: float,
                  params: ControllerParams) -> float:
    """PD spacing law plus filtered second-predecessor communicated acceleration.

    est_lead1_accel is the optimal-velocity estimate of the unconnected
    first predecessor; it is accepted for telemetry/diagnostics but not fed
    forward, because its equilibrium bias against longer-headway drivers
    destabilizes spacing (documented in the repo notes).
    """
    del est_lead1_accel
    return float(acc_command(e, e_dot, params) + feedforward_step(lead2_accel, filt, dt, params))


def select_planner(connected: bool, caccu_capable: bool, first_verdict: int,
                   second_verdict: int) -> PlannerMode:
    """Planner choice from the ego capabilities and identification verdicts.

    Confirmed-connected first predecessor selects the cooperative planner;
    a resolved-unconnected first plus confirmed-connected second selects the
    mixed planner when the ego supports it; anything else (including
    pending verdicts or an unconnected ego) falls back to radar-only.
    """
    if not connected:
        return PlannerMode.ACC
    if first_verdict == CONNECTED:
        return PlannerMode.CACC
    if caccu_capable and first_verdict == UNCONNECTED and second_verdict == CONNECTED:
        return PlannerMode.CACCU
    return PlannerMode.ACC


def saturate(u, params: ControllerParams):
    return np.clip(u, params.u_min, params.u_max)
