"""Coordinate frames, rotations, angle arithmetic, air data, and geodetic conversion.

Conventions used throughout the stack:

- NED inertial frame: x north, y east, z down, anchored at the mission origin.
- Body frame: x out the nose, y out the right wing, z out the belly.
- Euler angles follow the Z-Y-X (yaw -> pitch -> roll) sequence.
- Angles are radians, wrapped to (-pi, pi]; pitch is kept away from +/-pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = 9.80665  # m/s^2

# Pitch must stay this far from +/-pi/2; the Euler kinematics are singular there.
GIMBAL_GUARD = 1e-6

# WGS-84 ellipsoid
_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_WGS84_E2 = _WGS84_F * (2.0 - _WGS84_F)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; the boundary maps to +pi."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    w = (a + math.pi) % math.tau - math.pi
    return math.pi if w == -math.pi else w


def _check_finite(name: str, *values: float) -> None:
    for x in values:
        if not math.isfinite(x):
            raise ValueError(f"{name} contains non-finite value {x!r}")


@dataclass(frozen=True)
class StateVector:
    """12-state rigid-body state: NED position, body velocity, attitude, body rates."""

    p_n: float
    p_e: float
    p_d: float
    u: float
    v: float
    w: float
    phi: float
    theta: float
    psi: float
    p: float
    q: float
    r: float

    def __post_init__(self) -> None:
        _check_finite(
            "StateVector",
            self.p_n, self.p_e, self.p_d, self.u, self.v, self.w,
            self.phi, self.theta, self.psi, self.p, self.q, self.r,
        )
        if abs(self.theta) >= math.pi / 2 - GIMBAL_GUARD:
            raise ValueError(f"pitch {self.theta} rad is inside the gimbal-lock guard")
        object.__setattr__(self, "phi", wrap_angle(self.phi))
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def as_array(self) -> np.ndarray:
        return np.array([
            self.p_n, self.p_e, self.p_d, self.u, self.v, self.w,
            self.phi, self.theta, self.psi, self.p, self.q, self.r,
        ])

    @classmethod
    def from_array(cls, x) -> "StateVector":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class AirData:
    """Air-relative and ground-track quantities derived from a state and the wind."""

    va: float     # airspeed, m/s
    alpha: float  # angle of attack, rad
    beta: float   # sideslip, rad
    chi: float    # course angle, rad
    vg: float     # horizontal ground speed, m/s

    def __post_init__(self) -> None:
        _check_finite("AirData", self.va, self.alpha, self.beta, self.chi, self.vg)
        if self.va < 0 or self.vg < 0:
            raise ValueError("airspeed and ground speed must be non-negative")
        object.__setattr__(self, "chi", wrap_angle(self.chi))


@dataclass(frozen=True)
class WindVector:
    """Steady wind expressed in NED, m/s."""

    w_n: float = 0.0
    w_e: float = 0.0
    w_d: float = 0.0

    def __post_init__(self) -> None:
        _check_finite("WindVector", self.w_n, self.w_e, self.w_d)


@dataclass(frozen=True)
class GeodeticCoord:
    """Geodetic coordinate: latitude/longitude in degrees, altitude in meters."""

    lat: float
    lon: float
    alt: float

    def __post_init__(self) -> None:
        _check_finite("GeodeticCoord", self.lat, self.lon, self.alt)
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 < self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of (-180, 180]")


def euler_to_rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    """Rotation matrix from body to NED for Z-Y-X Euler angles.

    v_ned = R @ v_body; the inverse transform is R.T.
    """
    _check_finite("euler angles", phi, theta, psi)
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return np.array([
        [cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi],
        [cth * spsi, sphi * sth * spsi + cphi * cpsi, cphi * sth * spsi - sphi * cpsi],
        [-sth, sphi * cth, cphi * cth],
    ])


def rotation_to_euler(rot: np.ndarray) -> tuple[float, float, float]:
    """Recover (phi, theta, psi) from a body-to-NED rotation matrix."""
    theta = -math.asin(max(-1.0, min(1.0, float(rot[2, 0]))))
    phi = math.atan2(float(rot[2, 1]), float(rot[2, 2]))
    psi = math.atan2(float(rot[1, 0]), float(rot[0, 0]))
    return phi, theta, psi


def euler_kinematics(phi: float, theta: float) -> np.ndarray:
    """Matrix mapping body rates [p, q, r] to Euler-angle rates [phi., theta., psi.]."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth = math.cos(theta)
    if abs(cth) < GIMBAL_GUARD:
        raise ValueError("Euler kinematics singular: pitch at gimbal guard")
    tth = math.tan(theta)
    return np.array([
        [1.0, sphi * tth, cphi * tth],
        [0.0, cphi, -sphi],
        [0.0, sphi / cth, cphi / cth],
    ])


def compute_air_data(state: StateVector, wind: WindVector) -> AirData:
    """Airspeed, flow angles, course, and ground speed for a state in steady wind.

    The air-relative velocity is v_body - R_body_to_ned.T @ w_ned. With zero
    airspeed the flow angles are defined as zero.
    """
    rot = euler_to_rotation(state.phi, state.theta, state.psi)
    w_body = rot.T @ np.array([wind.w_n, wind.w_e, wind.w_d])
    u_r = state.u - float(w_body[0])
    v_r = state.v - float(w_body[1])
    w_r = state.w - float(w_body[2])
    va = math.sqrt(u_r * u_r + v_r * v_r + w_r * w_r)
    if va > 0.0:
        alpha = math.atan2(w_r, u_r)
        beta = math.asin(max(-1.0, min(1.0, v_r / va)))
    else:
        alpha = 0.0
        beta = 0.0
    v_ned = rot @ np.array([state.u, state.v, state.w])
    vg = math.hypot(float(v_ned[0]), float(v_ned[1]))
    chi = math.atan2(float(v_ned[1]), float(v_ned[0]))
    return AirData(va=va, alpha=alpha, beta=beta, chi=chi, vg=vg)


def _earth_radii(lat_rad: float) -> tuple[float, float]:
    """Meridian and prime-vertical curvature radii at a latitude."""
    s2 = math.sin(lat_rad) ** 2
    den = 1.0 - _WGS84_E2 * s2
    r_meridian = _WGS84_A * (1.0 - _WGS84_E2) / den ** 1.5
    r_normal = _WGS84_A / math.sqrt(den)
    return r_meridian, r_normal


def lla_to_ned(point: GeodeticCoord, origin: GeodeticCoord) -> tuple[float, float, float]:
    """Convert a geodetic coordinate to local NED meters about an origin.

    Uses a local tangent plane with per-latitude curvature radii; valid for
    mission-scale offsets (sub-0.1% error within ~10 km). Raises near the
    poles where the tangent-plane model degenerates.
    """
    for coord in (point, origin):
        if abs(coord.lat) > 89.0:
            raise ValueError("tangent-plane conversion invalid within 1 deg of a pole")
    lat0 = math.radians(origin.lat)
    r_m, r_n = _earth_radii(lat0)
    n = math.radians(point.lat - origin.lat) * r_m
    e = math.radians(point.lon - origin.lon) * r_n * math.cos(lat0)
    d = -(point.alt - origin.alt)
    return n, e, d


def ned_to_lla(n: float, e: float, d: float, origin: GeodeticCoord) -> GeodeticCoord:
    """Inverse of lla_to_ned about the same origin."""
    if abs(origin.lat) > 89.0:
        raise ValueError("tangent-plane conversion invalid within 1 deg of a pole")
    _check_finite("ned offset", n, e, d)
    lat0 = math.radians(origin.lat)
    r_m, r_n = _earth_radii(lat0)
    lat = origin.lat + math.degrees(n / r_m)
    lon = origin.lon + math.degrees(e / (r_n * math.cos(lat0)))
    return GeodeticCoord(lat=lat, lon=lon, alt=origin.alt - d)
