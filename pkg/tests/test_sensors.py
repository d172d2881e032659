import math

import numpy as np
import pytest

from leanwing.aero import forces_and_moments
from leanwing.frames import GRAVITY, StateVector, WindVector, euler_to_rotation
from leanwing.sensors import (STD_PRESSURE_PA, SensorConfig, SensorSuite,
                              pressure_to_airspeed, pressure_to_altitude)

RHO = 1.2682
# 0.5 * rho * va^2 at va=25 and rho*g*h at h=100, evaluated by hand
DIFF_PA_AT_25 = 396.3125
STATIC_DEFICIT_AT_100M = 1243.679353

QUIET = dict(gyro_sigma=0.0, accel_sigma=0.0, gnss_pos_sigma=(0.0,) * 3,
             gnss_vel_sigma=0.0, static_pressure_sigma=0.0,
             diff_pressure_sigma=0.0, mag_sigma=0.0)


def _state(**kw):
    base = dict(p_n=0.0, p_e=0.0, p_d=0.0, u=0.0, v=0.0, w=0.0,
                phi=0.0, theta=0.0, psi=0.0, p=0.0, q=0.0, r=0.0)
    base.update(kw)
    return StateVector(**base)


def _suite(**kw):
    return SensorSuite(SensorConfig(**{**QUIET, **kw}), rho_air=RHO, seed=0)


class TestImu:
    def test_at_rest_reads_minus_g(self):
        imu = _suite().sample_imu(_state(), (0.0, 0.0, 0.0))
        assert imu.gyro == (0.0, 0.0, 0.0)
        assert imu.accel == pytest.approx((0.0, 0.0, -GRAVITY))

    def test_constant_gyro_bias(self):
        imu = _suite(gyro_bias=(0.01, 0.0, 0.0)).sample_imu(
            _state(), (0.0, 0.0, 0.0))
        assert imu.gyro == pytest.approx((0.01, 0.0, 0.0))

    def test_coordinated_turn_z_axis_load_factor(self, airframe, trim_orbit):
        # true acceleration from the force model at the orbit trim point
        fm = forces_and_moments(trim_orbit.state, trim_orbit.surfaces,
                                WindVector(), airframe)
        accel = (fm.fx / airframe.mass, fm.fy / airframe.mass,
                 fm.fz / airframe.mass)
        imu = _suite().sample_imu(trim_orbit.state, accel)
        expected = -GRAVITY / math.cos(trim_orbit.state.phi)
        assert imu.accel[2] == pytest.approx(expected, rel=0.02)


class TestGnss:
    def test_zero_noise_is_exact_truth(self):
        state = _state(p_n=10.0, p_e=-4.0, p_d=-80.0, u=25.0, v=1.0, w=0.5,
                       phi=0.1, theta=0.05, psi=1.2)
        fix = _suite().sample_gnss(state)
        assert (fix.p_n, fix.p_e, fix.p_d) == (10.0, -4.0, -80.0)
        v_ned = euler_to_rotation(0.1, 0.05, 1.2) @ np.array([25.0, 1.0, 0.5])
        assert (fix.v_n, fix.v_e, fix.v_d) == pytest.approx(tuple(v_ned))

    def test_position_error_is_gauss_markov(self):
        tau, sigma, rate = 5.0, 2.0, 10.0
        suite = _suite(gnss_pos_sigma=(sigma, 0.0, 0.0),
                       gnss_pos_tau=(tau, tau, tau), gnss_rate_hz=rate)
        still = _state()
        n = 200000
        errs = np.array([suite.sample_gnss(still).p_n for _ in range(n)])
        lag = round(2.0 * rate)  # 2 s
        var = np.var(errs)
        autocov = np.mean(errs[:-lag] * errs[lag:])
        expected = math.exp(-2.0 / tau) * sigma ** 2
        assert var == pytest.approx(sigma ** 2, rel=0.05)
        # 3-sigma band of the autocovariance estimator for this process
        rho_sum = 1.0 / (math.exp(2.0 / (tau * rate)) - 1.0)
        band = 3.0 * sigma ** 2 * math.sqrt((1.0 + 2.0 * rho_sum) / n)
        assert abs(autocov - expected) < band

    def test_same_seed_same_stream(self):
        cfg = SensorConfig()
        a = SensorSuite(cfg, rho_air=RHO, seed=42)
        b = SensorSuite(cfg, rho_air=RHO, seed=42)
        st = _state(u=25.0)
        for _ in range(20):
            fa, fb = a.sample_gnss(st), b.sample_gnss(st)
            assert (fa.p_n, fa.v_e) == (fb.p_n, fb.v_e)

    def test_streams_are_independent_across_sensors(self):
        # perturbing the mag cannot shift the GNSS noise sequence
        a = SensorSuite(SensorConfig(mag_sigma=0.02), rho_air=RHO, seed=7)
        b = SensorSuite(SensorConfig(mag_sigma=0.2), rho_air=RHO, seed=7)
        st = _state(u=25.0)
        b.sample_mag(st)  # consume from the mag stream only
        for _ in range(10):
            fa, fb = a.sample_gnss(st), b.sample_gnss(st)
            assert (fa.p_n, fa.p_e, fa.v_n) == (fb.p_n, fb.p_e, fb.v_n)


class TestPressures:
    def test_ground_static_and_zero_diff(self):
        meas = _suite().sample_pressure(_state(), WindVector())
        assert meas.static_pa == STD_PRESSURE_PA
        assert meas.diff_pa == 0.0

    def test_dynamic_pressure_hand_value(self):
        meas = _suite().sample_pressure(_state(u=25.0), WindVector())
        assert meas.diff_pa == pytest.approx(DIFF_PA_AT_25, rel=1e-12)

    def test_altitude_deficit_hand_value(self):
        meas = _suite().sample_pressure(_state(p_d=-100.0), WindVector())
        assert STD_PRESSURE_PA - meas.static_pa == pytest.approx(
            STATIC_DEFICIT_AT_100M, rel=1e-9)

    def test_conversions_round_trip(self):
        assert pressure_to_altitude(STD_PRESSURE_PA - STATIC_DEFICIT_AT_100M,
                                    RHO) == pytest.approx(100.0)
        assert pressure_to_airspeed(DIFF_PA_AT_25, RHO) == pytest.approx(25.0)
        assert pressure_to_airspeed(-3.0, RHO) == 0.0


class TestMag:
    def test_zero_heading(self):
        assert _suite().sample_mag(_state()).heading == 0.0

    def test_declination_wraps(self):
        suite = _suite(mag_declination=0.1)
        meas = suite.sample_mag(_state(psi=3.1))
        assert meas.heading == pytest.approx(-3.083185307179586, abs=1e-12)

    def test_noise_sigma_measured(self):
        suite = _suite(mag_sigma=0.02)
        n = 10000
        draws = np.array([suite.sample_mag(_state()).heading
                          for _ in range(n)])
        std = np.std(draws)
        assert abs(std - 0.02) < 3.0 * 0.02 / math.sqrt(2.0 * n)


class TestConfigValidation:
    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            SensorConfig(gyro_sigma=-0.1)

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ValueError):
            SensorConfig(gnss_rate_hz=0.0)

    def test_nonpositive_tau_rejected(self):
        with pytest.raises(ValueError):
            SensorConfig(gnss_pos_tau=(1.0, 1.0, 0.0))
