"""Sensor models: IMU, GNSS, static/differential pressure, magnetometer.

Every sensor draws from its own random stream spawned from one master seed,
so runs are reproducible bit for bit and changing one sensor's rate or
parameters never perturbs the noise seen by the others. GNSS position error
is a first-order Gauss-Markov process per axis; everything else is white.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import GRAVITY, StateVector, WindVector, wrap_angle
from .aero import air_relative_velocity

STD_PRESSURE_PA = 101325.0


@dataclass(frozen=True)
class SensorConfig:
    imu_rate_hz: float = 100.0
    gnss_rate_hz: float = 10.0
    pressure_rate_hz: float = 50.0
    mag_rate_hz: float = 50.0
    gyro_sigma: float = 0.005            # rad/s per sample
    gyro_bias: tuple = (0.0, 0.0, 0.0)   # rad/s, constant over a run
    accel_sigma: float = 0.05            # m/s^2 per sample
    gnss_pos_sigma: tuple = (1.0, 1.0, 2.0)   # m, stationary Gauss-Markov sigma
    gnss_pos_tau: tuple = (0.05, 0.05, 0.05)  # s, Gauss-Markov time constants
    gnss_vel_sigma: float = 0.1          # m/s per axis
    static_pressure_sigma: float = 10.0  # Pa
    diff_pressure_sigma: float = 25.0    # Pa
    mag_sigma: float = 0.02              # rad
    mag_declination: float = 0.0         # rad, added to true heading

    def __post_init__(self) -> None:
        for name in ("imu_rate_hz", "gnss_rate_hz", "pressure_rate_hz", "mag_rate_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gyro_sigma", "accel_sigma", "gnss_vel_sigma",
                     "static_pressure_sigma", "diff_pressure_sigma", "mag_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if len(self.gyro_bias) != 3 or len(self.gnss_pos_sigma) != 3 \
                or len(self.gnss_pos_tau) != 3:
            raise ValueError("per-axis sensor parameters need three entries")
        if any(s < 0 for s in self.gnss_pos_sigma):
            raise ValueError("gnss_pos_sigma must be non-negative")
        if any(t <= 0 for t in self.gnss_pos_tau):
            raise ValueError("gnss_pos_tau must be positive")


@dataclass(frozen=True)
class ImuMeasurement:
    gyro: tuple    # rad/s body rates
    accel: tuple   # m/s^2 specific force


@dataclass(frozen=True)
class GnssMeasurement:
    p_n: float
    p_e: float
    p_d: float
    v_n: float
    v_e: float
    v_d: float


@dataclass(frozen=True)
class PressureMeasurement:
    static_pa: float
    diff_pa: float


@dataclass(frozen=True)
class MagMeasurement:
    heading: float  # rad, wrapped


class SensorSuite:
    """All onboard sensors for one vehicle, sampled on demand by the scheduler."""

    def __init__(self, config: SensorConfig, rho_air: float, seed: int = 0):
        if rho_air <= 0:
            raise ValueError("rho_air must be positive")
        self.config = config
        self.rho_air = rho_air
        streams = np.random.SeedSequence(seed).spawn(5)
        self._rng_imu = np.random.default_rng(streams[0])
        self._rng_gnss = np.random.default_rng(streams[1])
        self._rng_static = np.random.default_rng(streams[2])
        self._rng_diff = np.random.default_rng(streams[3])
        self._rng_mag = np.random.default_rng(streams[4])
        self._gm_state: np.ndarray | None = None
        # one Gauss-Markov step per GNSS sample
        dt = 1.0 / config.gnss_rate_hz
        self._gm_a = np.exp(-dt / np.asarray(config.gnss_pos_tau))
        sig = np.asarray(config.gnss_pos_sigma)
        self._gm_sigma = sig
        self._gm_innov = sig * np.sqrt(1.0 - self._gm_a ** 2)

    def sample_imu(self, state: StateVector, accel_body: tuple) -> ImuMeasurement:
        """Gyro and accelerometer sample.

        accel_body is the true inertial acceleration in body axes
        (total force over mass); the accelerometer senses specific force,
        so a vehicle at rest reads (0, 0, -g).
        """
        c = self.config
        gn = self._rng_imu.normal(0.0, c.gyro_sigma, 3)
        an = self._rng_imu.normal(0.0, c.accel_sigma, 3)
        gyro = (state.p + c.gyro_bias[0] + gn[0],
                state.q + c.gyro_bias[1] + gn[1],
                state.r + c.gyro_bias[2] + gn[2])
        sth = math.sin(state.theta)
        sphi, cphi = math.sin(state.phi), math.cos(state.phi)
        cth = math.cos(state.theta)
        accel = (accel_body[0] + GRAVITY * sth + an[0],
                 accel_body[1] - GRAVITY * sphi * cth + an[1],
                 accel_body[2] - GRAVITY * cphi * cth + an[2])
        return ImuMeasurement(gyro=gyro, accel=accel)

    def sample_gnss(self, state: StateVector) -> GnssMeasurement:
        c = self.config
        if self._gm_state is None:
            self._gm_state = self._rng_gnss.normal(0.0, self._gm_sigma)
        else:
            self._gm_state = self._gm_a * self._gm_state \
                + self._rng_gnss.normal(0.0, self._gm_innov)
        e = self._gm_state
        vn = self._rng_gnss.normal(0.0, c.gnss_vel_sigma, 3)
        sphi, cphi = math.sin(state.phi), math.cos(state.phi)
        sth, cth = math.sin(state.theta), math.cos(state.theta)
        spsi, cpsi = math.sin(state.psi), math.cos(state.psi)
        u, v, w = state.u, state.v, state.w
        v_n = cth * cpsi * u + (sphi * sth * cpsi - cphi * spsi) * v \
            + (cphi * sth * cpsi + sphi * spsi) * w
        v_e = cth * spsi * u + (sphi * sth * spsi + cphi * cpsi) * v \
            + (cphi * sth * spsi - sphi * cpsi) * w
        v_d = -sth * u + sphi * cth * v + cphi * cth * w
        return GnssMeasurement(
            p_n=state.p_n + e[0], p_e=state.p_e + e[1], p_d=state.p_d + e[2],
            v_n=v_n + vn[0], v_e=v_e + vn[1], v_d=v_d + vn[2])

    def sample_pressure(self, state: StateVector, wind: WindVector) -> PressureMeasurement:
        c = self.config
        h = -state.p_d
        static = STD_PRESSURE_PA - self.rho_air * GRAVITY * h \
            + self._rng_static.normal(0.0, c.static_pressure_sigma)
        u_r, v_r, w_r = air_relative_velocity(state, wind)
        va2 = u_r * u_r + v_r * v_r + w_r * w_r
        diff = 0.5 * self.rho_air * va2 + self._rng_diff.normal(0.0, c.diff_pressure_sigma)
        return PressureMeasurement(static_pa=static, diff_pa=diff)

    def sample_mag(self, state: StateVector) -> MagMeasurement:
        c = self.config
        noisy = state.psi + c.mag_declination + self._rng_mag.normal(0.0, c.mag_sigma)
        return MagMeasurement(heading=wrap_angle(noisy))


def pressure_to_altitude(static_pa: float, rho_air: float) -> float:
    """Altitude above the standard-pressure datum from a static pressure reading."""
    return (STD_PRESSURE_PA - static_pa) / (rho_air * GRAVITY)


def pressure_to_airspeed(diff_pa: float, rho_air: float) -> float:
    """Airspeed from a differential pressure reading; clamps negative readings."""
    return math.sqrt(max(0.0, 2.0 * diff_pa / rho_air))
