"""Human car-following: IDM with reaction delay, emergency braking and
perception errors.

The driver acts on the gap and closing speed perceived ``delay`` seconds
ago. Perception multiplies the true gap by exp(v_s * w_d) and offsets the
closing speed by gap * sigma_r * w_v, where w_d and w_v are
Ornstein-Uhlenbeck states with unit stationary variance and persistence
tau_err. Perception errors apply only when the pair (ego, leader) is not
fully connected; a connected human behind a connected leader reads exact
state off the air.

When the instantaneous ground-truth time-to-collision drops below the
threshold the driver slams the brakes at -b_e with zero delay, bypassing
perception.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HumanParams:
    """Driver model parameters. Defaults follow the human-model table."""

    v_d: float = 25.0          # desired speed, m/s
    s0: float = 2.0            # minimum gap, m
    a_max: float = 4.0         # maximum acceleration, m/s^2
    b_comf: float = 4.0        # comfortable deceleration, m/s^2
    b_e: float = 8.0           # emergency deceleration, m/s^2
    T: float = 1.5             # safe time headway, s (drawn per driver in [1, 2])
    delay: float = 0.9         # reaction delay, s
    ttc_threshold: float = 3.6  # s
    v_s: float = 0.05          # relative distance error coefficient
    sigma_r: float = 0.01      # relative approach-rate coefficient
    tau_err: float = 20.0      # error persistence, s

    def __post_init__(self) -> None:
        for name in ("v_d", "s0", "a_max", "b_comf", "b_e", "T",
                     "ttc_threshold", "tau_err"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.delay < 0 or self.v_s < 0 or self.sigma_r < 0:
            raise ValueError("delay and error coefficients must be nonnegative")


@dataclass
class PerceptionState:
    """Ornstein-Uhlenbeck error states for one driver."""

    w_d: float = 0.0
    w_v: float = 0.0


def idm_desired_gap(v, dv, params: HumanParams):
    """Desired gap: s0 + max(v*T + v*dv / (2*sqrt(a_max*b_comf)), 0).

    dv is ego speed minus leader speed (positive while closing). Accepts
    scalars or arrays.
    """
    dynamic = v * params.T + v * dv / (2.0 * np.sqrt(params.a_max * params.b_comf))
    return params.s0 + np.maximum(dynamic, 0.0)


def idm_accel(v, gap, dv, params: HumanParams):
    """IDM acceleration; gap must be strictly positive.

    a_max * (1 - (v / v_d)^4 - (desired_gap / gap)^2)
    """
    if np.any(np.asarray(gap) <= 0):
        raise ValueError("gap must be strictly positive (collision otherwise)")
    want = idm_desired_gap(v, dv, params)
    return params.a_max * (1.0 - (np.asarray(v) / params.v_d) ** 4 - (want / gap) ** 2)


def idm_equilibrium_gap(v: float, params: HumanParams) -> float:
    """Gap at which idm_accel is exactly zero for a constant-speed pair."""
    free = 1.0 - (v / params.v_d) ** 4
    if free <= 0:
        return np.inf
    return (params.s0 + v * params.T) / np.sqrt(free)


def ttc(gap, v_ego, v_lead):
    """Time-to-collision; infinity when not closing. Accepts arrays."""
    closing = np.asarray(v_ego, dtype=float) - np.asarray(v_lead, dtype=float)
    gap = np.asarray(gap, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(closing > 0.0, gap / np.where(closing > 0.0, closing, 1.0), np.inf)
    if out.ndim == 0:
        return float(out)
    return out


def ou_advance(w, eta, dt: float, tau_err: float):
    """One Ornstein-Uhlenbeck step: w <- exp(-dt/tau)*w + sqrt(2*dt/tau)*eta.

    eta is standard normal. The stationary variance of the iterate is
    (2*dt/tau) / (1 - exp(-2*dt/tau)), about 1.005 at dt=0.1, tau=20.
    """
    decay = np.exp(-dt / tau_err)
    return decay * w + np.sqrt(2.0 * dt / tau_err) * eta


def perceive(gap, dv, state: PerceptionState, dt: float, params: HumanParams,
             rng: np.random.Generator) -> tuple[float, float, PerceptionState]:
    """Perceived (gap, dv) plus the advanced error state.

    gap_est = gap * exp(v_s * w_d);  dv_est = dv + gap * sigma_r * w_v.
    The states advance after being read, with independent standard-normal
    innovations drawn from rng.
    """
    gap_est = gap * np.exp(params.v_s * state.w_d)
    dv_est = dv + gap * params.sigma_r * state.w_v
    eta = rng.standard_normal(2)
    nxt = PerceptionState(
        w_d=float(ou_advance(state.w_d, eta[0], dt, params.tau_err)),
        w_v=float(ou_advance(state.w_v, eta[1], dt, params.tau_err)),
    )
    return float(gap_est), float(dv_est), nxt


class DelayBuffer:
    """Ring buffer of past perceived (gap, dv) samples for one driver.

    Reads return the sample recorded ``delay`` seconds ago; before enough
    history exists the oldest recorded sample is used (cold-start rule).
    """

    def __init__(self, delay: float, dt: float):
        self.steps = int(round(delay / dt))
        self._gap: list[float] = []
        self._dv: list[float] = []

    def push(self, gap: float, dv: float) -> None:
        self._gap.append(gap)
        self._dv.append(dv)

    def read(self) -> tuple[float, float]:
        if not self._gap:
            raise ValueError("empty history buffer")
        k = max(len(self._gap) - 1 - self.steps, 0)
        return self._gap[k], self._dv[k]


def human_step(v_ego: float, gap: float, v_lead: float, buffer: DelayBuffer,
               state: PerceptionState, dt: float, params: HumanParams,
               rng: np.random.Generator, exact: bool = False) -> tuple[float, PerceptionState]:
    """Commanded acceleration for one driver at one step.

    Senses the current pair, pushes the perceived sample into the delay
    buffer, then evaluates the IDM on the delayed sample. exact=True skips
    perception errors (connected pair). Emergency braking overrides
    everything when the true TTC is under the threshold.
    """
    dv = v_ego - v_lead
    if exact:
        gap_est, dv_est, nxt = gap, dv, state
    else:
        gap_est, dv_est, nxt = perceive(gap, dv, state, dt, params, rng)
    buffer.push(gap_est, dv_est)
    if ttc(gap, v_ego, v_lead) < params.ttc_threshold:
        return -params.b_e, nxt
    gap_old, dv_old = buffer.read()
    return float(idm_accel(v_ego, max(gap_old, 1e-3), dv_old, params)), nxt
