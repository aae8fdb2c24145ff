"""Longitudinal plant: first-order powertrain lag behind an actuation delay.

The realized acceleration tracks the commanded acceleration issued t_d
seconds ago through a first-order lag with time constant tau_pt. The lag is
discretized exactly (zero-order hold), so for piecewise-constant commands
the discrete response lies on the continuous curve at sample times. Speed
clamps at zero (no reverse on the highway); position integrates the updated
speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DynamicsParams:
    tau_pt: float = 0.5   # powertrain time constant, s
    t_d: float = 0.3      # actuation delay, s

    def __post_init__(self) -> None:
        if self.tau_pt <= 0:
            raise ValueError("tau_pt must be positive")
        if self.t_d < 0:
            raise ValueError("t_d must be nonnegative")

    def delay_steps(self, dt: float) -> int:
        steps = self.t_d / dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"t_d={self.t_d} is not a multiple of dt={dt}")
        return int(round(steps))


@dataclass
class ActuationBuffer:
    """Pending commands for one vehicle, oldest first; length = t_d/dt."""

    pending: list[float] = field(default_factory=list)
    capacity: int = 0

    @staticmethod
    def create(params: DynamicsParams, dt: float, initial_command: float = 0.0) -> "ActuationBuffer":
        steps = params.delay_steps(dt)
        return ActuationBuffer(pending=[initial_command] * steps, capacity=steps)

    def shift(self, command: float) -> float:
        """Push the newest command, pop the one issued t_d ago."""
        if self.capacity == 0:
            return command
        self.pending.append(command)
        return self.pending.pop(0)


def lag_coefficient(dt: float, tau_pt: float) -> float:
    """Exact zero-order-hold lag coefficient 1 - exp(-dt/tau)."""
    return 1.0 - np.exp(-dt / tau_pt)


def dynamics_step(command: float, buffer: ActuationBuffer, position: float,
                  speed: float, accel: float, dt: float,
                  params: DynamicsParams) -> tuple[float, float, float]:
    """Advance one vehicle one step; returns (position, speed, accel).

    accel <- accel + (1 - exp(-dt/tau)) * (u(t - t_d) - accel)
    speed <- max(0, speed + accel*dt);  position <- position + speed*dt
    """
    delayed = buffer.shift(command)
    accel = accel + lag_coefficient(dt, params.tau_pt) * (delayed - accel)
    speed = max(0.0, speed + accel * dt)
    position = position + speed * dt
    return position, speed, accel
