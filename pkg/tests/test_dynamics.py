import numpy as np
import pytest

from platoonsim.dynamics import (ActuationBuffer, DynamicsParams,
                                 dynamics_step, lag_coefficient)

D = DynamicsParams()
DT = 0.1


def drive(commands, params=D, dt=DT, v0=0.0):
    buf = ActuationBuffer.create(params, dt)
    pos, spd, acc = 0.0, v0, 0.0
    hist = []
    for u in commands:
        pos, spd, acc = dynamics_step(u, buf, pos, spd, acc, dt, params)
        hist.append((pos, spd, acc))
    return np.array(hist)


class TestPlant:
    def test_unity_dc_gain(self):
        h = drive([2.0] * 400)
        assert h[-1, 2] == pytest.approx(2.0, abs=1e-4)

    def test_zero_command_uniform_motion(self):
        h = drive([0.0] * 50, v0=10.0)
        assert np.allclose(np.diff(h[:, 0]), 1.0)
        assert np.allclose(h[:, 1], 10.0)

    def test_step_response_closed_form(self):
        # delayed exponential: a(t_d + tau) = 1 - e^-1
        steps = round((D.t_d + D.tau_pt) / DT)
        h = drive([1.0] * steps)
        assert h[-1, 2] == pytest.approx(1.0 - np.exp(-1.0), abs=0.02)

    def test_delay_exactness(self):
        h = drive([1.0] * 10)
        d = D.delay_steps(DT)
        assert np.all(h[:d, 2] == 0.0)
        assert h[d, 2] > 0.0

    def test_speed_never_negative(self):
        h = drive([-5.0] * 200, v0=3.0)
        assert np.all(h[:, 1] >= 0.0)

    def test_non_divisible_delay_rejected(self):
        with pytest.raises(ValueError):
            DynamicsParams(t_d=0.25).delay_steps(0.1)

    def test_discretization_exact_on_piecewise_constant(self):
        # zero-order-hold discretization lands on the continuous solution at
        # sample times for inputs constant between samples, at any dt
        rng = np.random.default_rng(3)
        for dt in (0.1, 0.05):
            params = DynamicsParams(tau_pt=0.5, t_d=0.0)
            buf = ActuationBuffer.create(params, dt)
            pos, spd, acc = 0.0, 0.0, 0.0
            a_exact = 0.0
            worst = 0.0
            for _ in range(int(60 / dt)):
                u = float(rng.integers(-2, 3))
                pos, spd, acc = dynamics_step(u, buf, pos, spd, acc, dt, params)
                a_exact = u + (a_exact - u) * np.exp(-dt / params.tau_pt)
                worst = max(worst, abs(acc - a_exact))
            assert worst < 1e-12

    def test_lag_coefficient(self):
        assert lag_coefficient(0.1, 0.5) == pytest.approx(1 - np.exp(-0.2))


class TestBuffer:
    def test_shift_order(self):
        buf = ActuationBuffer.create(D, DT, initial_command=0.0)
        assert buf.capacity == 3
        out = [buf.shift(u) for u in (1.0, 2.0, 3.0, 4.0)]
        assert out == [0.0, 0.0, 0.0, 1.0]

    def test_zero_delay_passthrough(self):
        buf = ActuationBuffer.create(DynamicsParams(t_d=0.0), DT)
        assert buf.shift(5.0) == 5.0
