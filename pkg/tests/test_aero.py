import math

import numpy as np
import pytest

from leanwing import dynamics
from leanwing.aero import (AircraftParams, ControlSurfaces, MAX_DEFLECTION,
                           ParamFileError, forces_and_moments,
                           longitudinal_coefficients, load_params,
                           propeller_thrust_torque)
from leanwing.frames import StateVector, WindVector

# (C_L0 + C_Lalpha*0.05)^2 / (pi*e*AR) at e=0.9, AR=9, evaluated by hand
INDUCED_DRAG_ORACLE = 0.010241335680966574
# 0.5 * rho * S_prop * C_prop * k_motor^2 for the shipped airframe file
STATIC_THRUST_SHIPPED = 822.605248


def _minimal_params(**kw):
    base = dict(mass=10.0, Jx=1.0, Jy=1.0, Jz=1.0, Jxz=0.0,
                S_wing=1.0, b_span=3.0, c_chord=0.19, rho_air=1.225,
                e_oswald=0.9, C_L0=0.23, C_Lalpha=5.61, C_Lq=0.0,
                C_Ldelta_e=0.0, C_Dp=0.043, C_malpha=-1.0)
    base.update(kw)
    return AircraftParams(**base)


def _level_state(u=0.0):
    return StateVector(p_n=0.0, p_e=0.0, p_d=0.0, u=u, v=0.0, w=0.0,
                       phi=0.0, theta=0.0, psi=0.0, p=0.0, q=0.0, r=0.0)


class TestCoefficients:
    def test_induced_drag_hand_value(self):
        params = _minimal_params()
        assert params.AR == pytest.approx(9.0)
        _, c_d = longitudinal_coefficients(0.05, params)
        assert c_d - params.C_Dp == pytest.approx(INDUCED_DRAG_ORACLE,
                                                  rel=1e-12)

    def test_lift_linear_below_stall(self):
        params = _minimal_params()
        c_l, _ = longitudinal_coefficients(0.05, params)
        assert c_l == pytest.approx(0.23 + 5.61 * 0.05, rel=1e-3)

    def test_lift_blends_toward_flat_plate_past_stall(self):
        params = _minimal_params()
        linear_would_be = 0.23 + 5.61 * 0.8
        c_l, _ = longitudinal_coefficients(0.8, params)
        assert c_l < 0.5 * linear_would_be


class TestParamValidation:
    def test_indefinite_inertia_rejected(self):
        with pytest.raises(ParamFileError, match="positive definite"):
            _minimal_params(Jx=1.0, Jz=1.0, Jxz=2.0)

    def test_unstable_pitch_slope_rejected_without_override(self):
        with pytest.raises(ParamFileError, match="C_malpha"):
            _minimal_params(C_malpha=0.5)
        p = _minimal_params(C_malpha=0.5, allow_unstable=True)
        assert p.C_malpha == 0.5

    def test_unknown_yaml_key_rejected(self):
        doc = "inertia:\n  mass: 1\n  bogus: 2\n"
        with pytest.raises(ParamFileError):
            load_params(doc)


class TestSurfaces:
    def test_deflection_limit_enforced(self):
        ControlSurfaces(delta_a=MAX_DEFLECTION)
        with pytest.raises(ValueError):
            ControlSurfaces(delta_a=MAX_DEFLECTION + 0.01)

    def test_throttle_range_enforced(self):
        ControlSurfaces(delta_t=1.0)
        for bad in (-0.01, 1.01, math.nan):
            with pytest.raises(ValueError):
                ControlSurfaces(delta_t=bad)


class TestPropeller:
    def test_zero_throttle_static_thrust_is_zero(self):
        thrust, torque = propeller_thrust_torque(0.0, 0.0, _minimal_params())
        assert thrust == 0.0
        assert torque == 0.0

    def test_full_throttle_static_thrust_golden_value(self, airframe):
        thrust, _ = propeller_thrust_torque(1.0, 0.0, airframe)
        assert thrust == pytest.approx(STATIC_THRUST_SHIPPED, rel=1e-9)


class TestForces:
    def test_at_rest_only_gravity_remains(self, airframe):
        fm = forces_and_moments(_level_state(), ControlSurfaces(),
                                WindVector(), airframe)
        g_force = airframe.mass * 9.80665
        assert fm.fx == pytest.approx(0.0, abs=1e-9)
        assert fm.fy == pytest.approx(0.0, abs=1e-9)
        assert fm.fz == pytest.approx(g_force, rel=1e-6)
        assert (fm.l, fm.m, fm.n) == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)

    def test_trim_forces_balance_the_state(self, airframe, trim_straight):
        fm = forces_and_moments(trim_straight.state, trim_straight.surfaces,
                                WindVector(), airframe)
        xdot = dynamics.state_derivative(trim_straight.state, fm, airframe)
        # every derivative except the horizontal position rates vanishes
        assert abs(xdot[2]) < 1e-7                      # climb rate
        assert np.max(np.abs(xdot[3:])) < 1e-7          # velocity/attitude/rate

    def test_wind_enters_through_relative_velocity(self, airframe):
        state = _level_state(u=25.0)
        calm = forces_and_moments(state, ControlSurfaces(delta_t=0.4),
                                  WindVector(), airframe)
        headwind = forces_and_moments(state, ControlSurfaces(delta_t=0.4),
                                      WindVector(w_n=-5.0), airframe)
        # headwind raises dynamic pressure: more lift (fz more negative), more drag
        assert headwind.fz < calm.fz
        assert headwind.fx < calm.fx
