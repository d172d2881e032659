import math

import numpy as np
import pytest

from leanwing.aero import ControlSurfaces, ForcesMoments
from leanwing.dynamics import (SimFault, TrimSpec, WindModel, compute_trim,
                               rk4_step, state_derivative)
from leanwing.frames import StateVector, WindVector, compute_air_data

from conftest import state_tuple

ZERO_FM = ForcesMoments(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def _state(**kw):
    base = dict(p_n=0.0, p_e=0.0, p_d=0.0, u=0.0, v=0.0, w=0.0,
                phi=0.0, theta=0.0, psi=0.0, p=0.0, q=0.0, r=0.0)
    base.update(kw)
    return StateVector(**base)


def _propagate(state, surfaces, params, dt, t_end):
    n = round(t_end / dt)
    for _ in range(n):
        state = rk4_step(state, surfaces, WindVector(), params, dt)
    return state


class TestStateDerivative:
    def test_coasting_level_flight(self, airframe):
        xdot = state_derivative(_state(u=25.0), ZERO_FM, airframe)
        assert xdot[0] == pytest.approx(25.0)
        assert np.max(np.abs(xdot[1:])) == 0.0

    def test_pitch_rate_maps_straight_to_theta_rate(self, airframe):
        xdot = state_derivative(_state(q=0.1), ZERO_FM, airframe)
        assert xdot[7] == pytest.approx(0.1)

    def test_force_free_rotation_preserves_speed(self, airframe):
        # rigid-body coupling only: |v_body| is invariant without forces
        state = _state(u=20.0, v=3.0, w=-2.0, p=0.3, q=-0.2, r=0.15)
        x = np.array(state_tuple(state))
        dt = 1e-3
        v0 = np.linalg.norm(x[3:6])
        for _ in range(10000):
            k1 = state_derivative(_sv(x), ZERO_FM, airframe)
            k2 = state_derivative(_sv(x + 0.5 * dt * k1), ZERO_FM, airframe)
            k3 = state_derivative(_sv(x + 0.5 * dt * k2), ZERO_FM, airframe)
            k4 = state_derivative(_sv(x + dt * k3), ZERO_FM, airframe)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert abs(np.linalg.norm(x[3:6]) - v0) < 1e-9

    def test_gimbal_guard_raises(self, airframe):
        # valid state pitching hard enough to cross the guard within one step
        state = _state(u=25.0, theta=math.pi / 2.0 - 1e-4, q=10.0)
        with pytest.raises(SimFault):
            rk4_step(state, ControlSurfaces(), WindVector(), airframe, 0.002)


def _sv(x):
    return StateVector(*x)


class TestRk4:
    def test_taylor_consistency_as_dt_shrinks(self, airframe, trim_straight):
        state = trim_straight.state
        surfaces = ControlSurfaces(
            delta_a=trim_straight.surfaces.delta_a,
            delta_e=trim_straight.surfaces.delta_e + 0.05,
            delta_r=trim_straight.surfaces.delta_r,
            delta_t=trim_straight.surfaces.delta_t)
        errs = []
        from leanwing.aero import forces_and_moments
        fm = forces_and_moments(state, surfaces, WindVector(), airframe)
        f0 = state_derivative(state, fm, airframe)
        x0 = np.array(state_tuple(state))
        for dt in (4e-3, 2e-3, 1e-3):
            stepped = rk4_step(state, surfaces, WindVector(), airframe, dt)
            euler = x0 + dt * f0
            errs.append(np.linalg.norm(np.array(state_tuple(stepped)) - euler))
        # the difference from the first-order step is the O(dt^2) remainder
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)

    def test_global_convergence_order(self, airframe, trim_straight):
        # 5 s off-trim maneuver, reference at dt/8 of the finest grid
        surfaces = ControlSurfaces(
            delta_a=trim_straight.surfaces.delta_a + 0.01,
            delta_e=trim_straight.surfaces.delta_e + 0.03,
            delta_r=trim_straight.surfaces.delta_r,
            delta_t=trim_straight.surfaces.delta_t)
        state = trim_straight.state
        dts = (8e-3, 4e-3, 2e-3)
        ref = _propagate(state, surfaces, airframe, 2e-3 / 8.0, 5.0)
        ref_x = np.array(state_tuple(ref))
        errs = [np.linalg.norm(
            np.array(state_tuple(_propagate(state, surfaces, airframe, dt, 5.0)))
            - ref_x) for dt in dts]
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope >= 3.9

    def test_dt_bounds(self, airframe):
        with pytest.raises(ValueError):
            rk4_step(_state(u=25.0), ControlSurfaces(), WindVector(),
                     airframe, 0.05)


class TestTrim:
    def test_straight_level_shape(self, trim_straight):
        s = trim_straight.state
        assert trim_straight.residual_norm < 1e-8
        assert abs(s.phi) < 1e-6
        assert abs(s.v) < 1e-6

    def test_straight_trim_holds_airspeed_and_slope(self, airframe,
                                                    trim_straight):
        state = trim_straight.state
        end = _propagate(state, trim_straight.surfaces, airframe, 2e-3, 10.0)
        air0 = compute_air_data(state, WindVector())
        air1 = compute_air_data(end, WindVector())
        gamma0 = math.atan2(-state_derivative(state, ZERO_FM, airframe)[2], air0.vg)
        vz = (end.p_d - state.p_d)
        assert abs(air1.va - air0.va) < 1e-3
        # level trim: accumulated altitude change stays millimetric
        assert abs(vz) < 1e-2
        assert abs(gamma0) < 1e-6

    def test_idempotent_resolve(self, airframe, trim_straight):
        again = compute_trim(TrimSpec(va=25.0, gamma=0.0), airframe,
                             initial=trim_straight)
        assert again.iterations <= 2
        assert again.residual_norm < 1e-8

    def test_orbit_trim_banks_into_the_turn(self, trim_orbit):
        assert trim_orbit.state.phi > 0.05

    def test_climb_needs_more_throttle(self, airframe, trim_straight):
        climb = compute_trim(TrimSpec(va=25.0, gamma=math.radians(5.0)),
                             airframe)
        assert climb.surfaces.delta_t > trim_straight.surfaces.delta_t

    def test_bad_specs_rejected(self):
        with pytest.raises(ValueError):
            TrimSpec(va=-1.0)
        with pytest.raises(ValueError):
            TrimSpec(va=25.0, orbit_radius=5.0)


class TestWindModel:
    def test_zero_sigma_returns_steady_every_step(self):
        model = WindModel(WindVector(w_n=3.0, w_e=-1.0), seed=1)
        for _ in range(50):
            w = model.sample()
            assert (w.w_n, w.w_e, w.w_d) == (3.0, -1.0, 0.0)

    def test_seed_reproducibility(self):
        a = WindModel(WindVector(), (1.0, 1.0, 0.5), seed=9)
        b = WindModel(WindVector(), (1.0, 1.0, 0.5), seed=9)
        for _ in range(100):
            wa, wb = a.sample(), b.sample()
            assert (wa.w_n, wa.w_e, wa.w_d) == (wb.w_n, wb.w_e, wb.w_d)

    def test_gust_mean_near_steady(self):
        sigma = 0.8
        model = WindModel(WindVector(w_n=2.0), (sigma, 0.0, 0.0), seed=4)
        n = 100000
        mean = sum(model.sample().w_n for _ in range(n)) / n
        assert abs(mean - 2.0) < 3.0 * sigma / math.sqrt(n)
