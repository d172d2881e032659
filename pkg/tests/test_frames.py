import math

import numpy as np
import pytest

from leanwing.frames import (GeodeticCoord, StateVector, WindVector,
                             compute_air_data, euler_to_rotation,
                             lla_to_ned, ned_to_lla, rotation_to_euler,
                             wrap_angle)

# WGS-84 meridian/prime-vertical displacements at lat 40 deg for +1e-5 deg,
# frozen from an independent ellipsoid-arc evaluation (a=6378137,
# 1/f=298.257223563): n = M(40)*dphi, e = N(40)*cos(40)*dlon.
WGS84_NORTH_1E5DEG_AT_40 = 1.11034632576751
WGS84_EAST_1E5DEG_AT_40 = 0.8539385695861844


def _axis_rotations(phi, theta, psi):
    """Independent oracle: compose per-axis rotation matrices explicitly."""
    cz, sz = math.cos(psi), math.sin(psi)
    cy, sy = math.cos(theta), math.sin(theta)
    cx, sx = math.cos(phi), math.sin(phi)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


def _state(**kw):
    base = dict(p_n=0.0, p_e=0.0, p_d=0.0, u=0.0, v=0.0, w=0.0,
                phi=0.0, theta=0.0, psi=0.0, p=0.0, q=0.0, r=0.0)
    base.update(kw)
    return StateVector(**base)


class TestRotation:
    def test_identity(self):
        assert np.allclose(euler_to_rotation(0.0, 0.0, 0.0), np.eye(3))

    def test_pure_yaw_maps_body_x_to_east(self):
        r = euler_to_rotation(0.0, 0.0, math.pi / 2.0)
        assert np.allclose(r @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0],
                           atol=1e-12)

    def test_orthonormal_and_proper_over_random_angles(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            phi, psi = rng.uniform(-math.pi, math.pi, 2)
            theta = rng.uniform(-1.5, 1.5)
            r = euler_to_rotation(phi, theta, psi)
            assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
            assert abs(np.linalg.det(r) - 1.0) < 1e-12

    def test_matches_axis_composition_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            phi, psi = rng.uniform(-math.pi, math.pi, 2)
            theta = rng.uniform(-1.5, 1.5)
            assert np.allclose(euler_to_rotation(phi, theta, psi),
                               _axis_rotations(phi, theta, psi), atol=1e-14)

    def test_euler_round_trip(self):
        rng = np.random.default_rng(13)
        for _ in range(500):
            phi, psi = rng.uniform(-math.pi + 1e-6, math.pi, 2)
            theta = rng.uniform(-1.5, 1.5)
            got = rotation_to_euler(euler_to_rotation(phi, theta, psi))
            assert np.allclose(got, (phi, theta, psi), atol=1e-9)


class TestWrapAngle:
    def test_zero(self):
        assert wrap_angle(0.0) == 0.0

    def test_350_degrees_becomes_minus_10(self):
        assert wrap_angle(math.radians(350.0)) == pytest.approx(
            math.radians(-10.0), abs=1e-12)

    def test_pi_boundary_maps_to_positive_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    def test_idempotent_and_congruent(self):
        rng = np.random.default_rng(14)
        for a in rng.uniform(-50.0, 50.0, 1000):
            w = wrap_angle(a)
            assert -math.pi < w <= math.pi
            assert wrap_angle(w) == pytest.approx(w, abs=1e-15)
            assert math.remainder(w - a, 2.0 * math.pi) == pytest.approx(
                0.0, abs=1e-9)


class TestAirData:
    def test_still_air_straight(self):
        air = compute_air_data(_state(u=25.0), WindVector())
        assert air.va == pytest.approx(25.0)
        assert air.alpha == 0.0
        assert air.beta == 0.0

    def test_alpha_from_w_over_u(self):
        air = compute_air_data(_state(u=25.0, w=25.0 * math.tan(0.1)),
                               WindVector())
        assert air.alpha == pytest.approx(0.1, abs=1e-12)

    def test_head_wind(self):
        air = compute_air_data(_state(u=25.0), WindVector(w_n=-5.0))
        assert air.va == pytest.approx(30.0)
        assert air.vg == pytest.approx(25.0)
        assert air.chi == pytest.approx(0.0, abs=1e-12)

    def test_zero_airspeed_degenerates_cleanly(self):
        air = compute_air_data(_state(), WindVector())
        assert air.va == 0.0
        assert air.alpha == 0.0
        assert air.beta == 0.0

    def test_va_equals_u_for_all_speeds(self):
        for u in (1.0, 5.0, 17.3, 42.0):
            air = compute_air_data(_state(u=u), WindVector())
            assert air.va == pytest.approx(u)
            assert air.alpha == 0.0
            assert air.beta == 0.0


class TestGeodetic:
    origin = GeodeticCoord(lat=40.0, lon=-111.9, alt=1500.0)

    def test_origin_maps_to_zero(self):
        assert lla_to_ned(self.origin, self.origin) == (0.0, 0.0, 0.0)

    def test_meridian_arc_against_wgs84_oracle(self):
        pt = GeodeticCoord(lat=40.0 + 1e-5, lon=-111.9, alt=1500.0)
        n, e, d = lla_to_ned(pt, self.origin)
        assert n == pytest.approx(WGS84_NORTH_1E5DEG_AT_40, abs=0.01)
        assert e == pytest.approx(0.0, abs=0.01)
        assert d == pytest.approx(0.0, abs=1e-9)

    def test_parallel_arc_against_wgs84_oracle(self):
        pt = GeodeticCoord(lat=40.0, lon=-111.9 + 1e-5, alt=1500.0)
        n, e, _ = lla_to_ned(pt, self.origin)
        assert e == pytest.approx(WGS84_EAST_1E5DEG_AT_40, abs=0.01)
        assert n == pytest.approx(0.0, abs=0.01)

    def test_altitude_sign_convention(self):
        pt = GeodeticCoord(lat=40.0, lon=-111.9, alt=1550.0)
        assert lla_to_ned(pt, self.origin)[2] == pytest.approx(-50.0)

    def test_round_trip_at_1km_offsets(self):
        for n, e, d in ((1000.0, 0.0, 0.0), (0.0, 1000.0, -80.0),
                        (-700.0, 700.0, 30.0)):
            back = lla_to_ned(ned_to_lla(n, e, d, self.origin), self.origin)
            assert np.allclose(back, (n, e, d), atol=1e-3)

    def test_near_pole_rejected(self):
        polar = GeodeticCoord(lat=89.5, lon=0.0, alt=0.0)
        with pytest.raises(ValueError):
            lla_to_ned(polar, GeodeticCoord(lat=89.6, lon=0.0, alt=0.0))
