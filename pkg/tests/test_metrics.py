import numpy as np
import pytest

from platoonsim.engine import MODE_ACC, MODE_CACC, MODE_CACCU
from platoonsim.metrics import (FuelModelParams, RunMetrics, accel_rms,
                                compute_run_metrics, fuel_rate,
                                max_unsafe_spacing, scope_metrics,
                                traction_power_kw, utilization)

F = FuelModelParams()


class TestUtilization:
    def test_all_cacc(self):
        trace = np.full((100, 3), MODE_CACC, dtype=np.int8)
        assert utilization(trace, MODE_CACC, MODE_CACCU) == (1.0, 0.0)

    def test_all_radar_only(self):
        trace = np.full((100, 3), MODE_ACC, dtype=np.int8)
        assert utilization(trace, MODE_CACC, MODE_CACCU) == (0.0, 0.0)

    def test_counting(self):
        trace = np.full((12000, 1), MODE_ACC, dtype=np.int8)
        trace[:600, 0] = MODE_CACCU
        u_cacc, u_caccu = utilization(trace, MODE_CACC, MODE_CACCU)
        assert u_caccu == pytest.approx(0.05)
        assert u_cacc == 0.0


class TestUnsafeSpacing:
    def test_never_negative(self):
        assert max_unsafe_spacing(np.array([0.0, 1.0, 2.5])) == 0.0

    def test_single_dip(self):
        assert max_unsafe_spacing(np.array([1.0, -1.7, 0.3])) == pytest.approx(1.7)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        e = rng.normal(0, 1, size=5000)
        brute = max((-x for x in e if x < 0), default=0.0)
        assert max_unsafe_spacing(e) == pytest.approx(brute)


class TestAccelRms:
    def test_constant(self):
        assert accel_rms(np.ones(50)) == pytest.approx(1.0)

    def test_zeros(self):
        assert accel_rms(np.zeros(50)) == 0.0

    def test_three_four(self):
        assert accel_rms(np.array([3.0, 4.0])) == pytest.approx(3.5355, abs=1e-4)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accel_rms(np.array([]))


class TestFuel:
    def test_idle_when_braking(self):
        assert fuel_rate(20.0, -3.0, F) == pytest.approx(F.c0)

    def test_idle_at_standstill(self):
        assert fuel_rate(0.0, 0.0, F) == pytest.approx(F.c0)

    def test_monotone_in_accel(self):
        rates = [float(fuel_rate(15.0, a, F)) for a in np.linspace(0, 3, 20)]
        assert all(b >= a for a, b in zip(rates, rates[1:]))

    def test_power_sign(self):
        assert traction_power_kw(20.0, -3.0, F) < 0
        assert traction_power_kw(20.0, 0.0, F) > 0


class TestAggregation:
    def test_rms_pools_squares(self):
        speed = np.full((100, 4), 15.0)
        accel = np.zeros((100, 4))
        accel[:, 0] = 2.0
        m = scope_metrics(speed, accel, 0.1, F)
        assert m.accel_rms == pytest.approx(np.sqrt(4.0 / 4.0))

    def test_compute_run_metrics_matches_brute_force(self):
        rng = np.random.default_rng(1)
        steps, n = 300, 6
        mode = rng.integers(0, 3, size=(steps, n)).astype(np.int8)
        auto = np.array([True, True, False, False, False, True])
        mode[:, ~auto] = -1
        err = rng.normal(0, 1, size=(steps, n))
        err[:, ~auto] = np.nan
        speed = rng.uniform(5, 20, size=(steps, n))
        accel = rng.normal(0, 1, size=(steps, n))
        m = compute_run_metrics(mode, err, speed, accel, auto, 0.1, F,
                                MODE_CACC, MODE_CACCU)
        # brute force, straight from the arrays
        coop = mode[:, auto]
        assert m.utilization_cacc == pytest.approx(np.mean(coop == MODE_CACC))
        assert m.utilization_caccu == pytest.approx(np.mean(coop == MODE_CACCU))
        assert m.utilization_coop == pytest.approx(
            np.mean((coop == MODE_CACC) | (coop == MODE_CACCU)))
        neg = err[:, auto][np.isfinite(err[:, auto])]
        assert m.max_unsafe_spacing == pytest.approx(max(0.0, float(-neg.min())))
        assert m.automated.accel_rms == pytest.approx(
            float(np.sqrt(np.mean(accel[:, auto] ** 2))))
        assert m.fleet.min_speed == pytest.approx(float(speed.min()))
        rates = fuel_rate(speed, accel, F)
        assert m.fleet.fuel_total == pytest.approx(float(rates.sum() * 0.1))
        assert m.fleet.fuel_rate_mean == pytest.approx(float(rates.mean()))

    def test_no_automated_vehicles(self):
        steps, n = 50, 3
        m = compute_run_metrics(np.full((steps, n), -1, dtype=np.int8),
                                np.full((steps, n), np.nan),
                                np.full((steps, n), 10.0), np.zeros((steps, n)),
                                np.zeros(n, dtype=bool), 0.1, F,
                                MODE_CACC, MODE_CACCU)
        assert m.utilization_coop == 0.0
        assert m.max_unsafe_spacing == 0.0
        assert np.isnan(m.automated.accel_rms)
