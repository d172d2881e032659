"""Full-state extended Kalman filter over position, body velocity, attitude,
and gyro bias, mechanized directly on the IMU.

The 12-state vector is (p_n, p_e, p_d, u, v, w, phi, theta, psi, b_p, b_q,
b_r). Propagation integrates the bias-corrected gyro and the accelerometer
specific force; measurement models are looked up by name in a registry so
vehicle-specific sensors can be added without touching the filter core. All
linearizations are analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import chi2

from .frames import GRAVITY, wrap_angle

STATE_DIM = 12
_I12 = np.eye(STATE_DIM)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0]])


def _rotation(phi: float, theta: float, psi: float) -> np.ndarray:
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    spsi, cpsi = math.sin(psi), math.cos(psi)
    return np.array([
        [cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi],
        [cth * spsi, sphi * sth * spsi + cphi * cpsi, cphi * sth * spsi - sphi * cpsi],
        [-sth, sphi * cth, cphi * cth]])


def _drot_v_dangles(phi: float, theta: float, psi: float,
                    v: np.ndarray) -> np.ndarray:
    """d(R(phi,theta,psi) @ v)/d(phi,theta,psi), columns per angle."""
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    spsi, cpsi = math.sin(psi), math.cos(psi)
    d_phi = np.array([
        [0.0, cphi * sth * cpsi + sphi * spsi, -sphi * sth * cpsi + cphi * spsi],
        [0.0, cphi * sth * spsi - sphi * cpsi, -sphi * sth * spsi - cphi * cpsi],
        [0.0, cphi * cth, -sphi * cth]]) @ v
    d_theta = np.array([
        [-sth * cpsi, sphi * cth * cpsi, cphi * cth * cpsi],
        [-sth * spsi, sphi * cth * spsi, cphi * cth * spsi],
        [-cth, -sphi * sth, -cphi * sth]]) @ v
    d_psi = np.array([
        [-cth * spsi, -sphi * sth * spsi - cphi * cpsi, -cphi * sth * spsi + sphi * cpsi],
        [cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi],
        [0.0, 0.0, 0.0]]) @ v
    return np.column_stack([d_phi, d_theta, d_psi])


def _euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    sphi, cphi = math.sin(phi), math.cos(phi)
    cth = math.cos(theta)
    if abs(cth) < 1e-9:
        raise FloatingPointError("attitude propagation hit the gimbal-lock guard")
    tth = math.tan(theta)
    return np.array([
        [1.0, sphi * tth, cphi * tth],
        [0.0, cphi, -sphi],
        [0.0, sphi / cth, cphi / cth]])


def _deuler_rates_dangles(phi: float, theta: float,
                          omega: np.ndarray) -> np.ndarray:
    """d(T(phi,theta) @ omega)/d(phi,theta,psi)."""
    sphi, cphi = math.sin(phi), math.cos(phi)
    cth = math.cos(theta)
    tth = math.tan(theta)
    sec = 1.0 / cth
    d_phi = np.array([
        [0.0, cphi * tth, -sphi * tth],
        [0.0, -sphi, -cphi],
        [0.0, cphi * sec, -sphi * sec]]) @ omega
    d_theta = np.array([
        [0.0, sphi * sec * sec, cphi * sec * sec],
        [0.0, 0.0, 0.0],
        [0.0, sphi * tth * sec, cphi * tth * sec]]) @ omega
    return np.column_stack([d_phi, d_theta, np.zeros(3)])


def _dgravity_body_dangles(phi: float, theta: float) -> np.ndarray:
    """d(g * R^T e3)/d(phi,theta,psi); R^T e3 = (-sth, sphi*cth, cphi*cth)."""
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    d_phi = np.array([0.0, cphi * cth, -sphi * cth])
    d_theta = np.array([-cth, -sphi * sth, -cphi * sth])
    return GRAVITY * np.column_stack([d_phi, d_theta, np.zeros(3)])


def mechanization(x: np.ndarray, gyro: tuple, accel: tuple
                  ) -> tuple[np.ndarray, np.ndarray]:
    """IMU-driven state derivative and its analytic Jacobian d(xdot)/dx.

    Velocity states integrate specific force plus gravity minus the
    bias-corrected body-rate coupling; biases follow a random walk (zero
    derivative here, driven entirely by process noise).
    """
    v = x[3:6]
    phi, theta, psi = x[6], x[7], x[8]
    omega = np.asarray(gyro, dtype=float) - x[9:12]
    f_sp = np.asarray(accel, dtype=float)

    R = _rotation(phi, theta, psi)
    T = _euler_rate_matrix(phi, theta)
    sth = math.sin(theta)
    g_body = GRAVITY * np.array(
        [-sth, math.sin(phi) * math.cos(theta), math.cos(phi) * math.cos(theta)])

    xdot = np.zeros(STATE_DIM)
    xdot[0:3] = R @ v
    xdot[3:6] = f_sp + g_body - np.cross(omega, v)
    xdot[6:9] = T @ omega

    A = np.zeros((STATE_DIM, STATE_DIM))
    A[0:3, 3:6] = R
    A[0:3, 6:9] = _drot_v_dangles(phi, theta, psi, v)
    A[3:6, 3:6] = -_skew(omega)
    A[3:6, 6:9] = _dgravity_body_dangles(phi, theta)
    A[3:6, 9:12] = -_skew(v)
    A[6:9, 6:9] = _deuler_rates_dangles(phi, theta, omega)
    A[6:9, 9:12] = -T
    return xdot, A


@dataclass(frozen=True)
class MeasurementModel:
    """A named measurement: prediction, Jacobian, default noise, gating."""

    name: str
    dim: int
    predict: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    noise: np.ndarray
    angular: tuple = ()            # residual indices wrapped into (-pi, pi]
    gate_quantile: float | None = 0.999
    gate_recovery: bool = True     # long rejection streaks force the update in

    def __post_init__(self) -> None:
        noise = np.atleast_2d(np.asarray(self.noise, dtype=float))
        if noise.shape != (self.dim, self.dim):
            raise ValueError(f"noise for '{self.name}' must be {self.dim}x{self.dim}")
        object.__setattr__(self, "noise", noise)
        if self.gate_quantile is not None and not 0.0 < self.gate_quantile < 1.0:
            raise ValueError("gate_quantile must be in (0, 1)")


@dataclass(frozen=True)
class UpdateResult:
    accepted: bool
    nis: float
    innovation: np.ndarray
    recovered: bool = False    # forced through the gate after a rejection streak


@dataclass(frozen=True)
class EkfConfig:
    dt: float = 0.01
    imu_dt: float = 0.01
    gyro_sigma: float = 0.005
    accel_sigma: float = 0.05
    bias_walk_psd: float = 1e-9        # (rad/s)^2/s random walk driving the bias states
    q_floor: tuple = (1e-8,) * 3 + (1e-6,) * 3 + (1e-9,) * 3 + (0.0,) * 3
    p0_pos: float = 4.0
    p0_vel: float = 1.0
    p0_att: float = 0.05
    p0_bias: float = 1e-3
    rho_air: float = 1.2682
    r_gnss_pos: tuple = (1.0, 1.0)     # m^2
    r_gnss_vel: float = 0.01           # (m/s)^2
    r_baro_alt: float = 0.65           # m^2
    # Pitot R covers sensor noise plus the wind term the measurement model
    # leaves out (rho*u*w_typ ~ 100 Pa for a few m/s of wind), so the pitot
    # aids the airspeed state without dragging the GNSS-driven solution.
    r_airspeed: float = 1.0e4          # Pa^2
    r_mag: float = 4.0e-4              # rad^2
    gate_quantile: float = 0.999
    gates_disabled: tuple = ()         # model names whose gate is bypassed
    gate_recovery_after: int = 10      # consecutive rejections before forcing one in

    def __post_init__(self) -> None:
        if not 0 < self.dt <= 0.1 or not 0 < self.imu_dt <= 0.1:
            raise ValueError("estimator and IMU periods must be in (0, 0.1] s")
        for name in ("gyro_sigma", "accel_sigma", "bias_walk_psd", "rho_air"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if len(self.q_floor) != STATE_DIM:
            raise ValueError("q_floor needs one entry per state")


@dataclass(frozen=True)
class EstimatedState:
    """Filter output consumed by guidance and control."""

    p_n: float
    p_e: float
    p_d: float
    u: float
    v: float
    w: float
    phi: float
    theta: float
    psi: float
    b_p: float
    b_q: float
    b_r: float
    chi: float
    v_g: float

    @property
    def altitude(self) -> float:
        return -self.p_d


class Ekf:
    """IMU-mechanized EKF with a pluggable measurement registry."""

    def __init__(self, config: EkfConfig = EkfConfig()):
        self.config = config
        self._x = np.zeros(STATE_DIM)
        self._P = np.zeros((STATE_DIM, STATE_DIM))
        self._initialized = False
        self._models: dict[str, MeasurementModel] = {}
        self._gates: dict[str, float] = {}
        self._rejects: dict[str, int] = {}
        self._register_builtins()

    # -- registry -------------------------------------------------------

    def register_model(self, model: MeasurementModel) -> None:
        if model.name in self._models:
            raise ValueError(f"measurement model '{model.name}' already registered")
        self._models[model.name] = model
        if model.gate_quantile is not None and model.name not in self.config.gates_disabled:
            self._gates[model.name] = float(chi2.ppf(model.gate_quantile, model.dim))

    def unregister_model(self, name: str) -> None:
        if name not in self._models:
            raise ValueError(f"no measurement model '{name}'")
        del self._models[name]
        self._gates.pop(name, None)
        self._rejects.pop(name, None)

    def model(self, name: str) -> MeasurementModel:
        if name not in self._models:
            raise KeyError(f"no measurement model named '{name}'")
        return self._models[name]

    @property
    def model_names(self) -> tuple:
        return tuple(self._models)

    def _register_builtins(self) -> None:
        cfg = self.config
        rho = cfg.rho_air

        def h_gnss_pos(x):
            return x[0:2].copy()

        def H_gnss_pos(x):
            H = np.zeros((2, STATE_DIM))
            H[0, 0] = 1.0
            H[1, 1] = 1.0
            return H

        def h_gnss_vel(x):
            return _rotation(x[6], x[7], x[8]) @ x[3:6]

        def H_gnss_vel(x):
            H = np.zeros((3, STATE_DIM))
            H[:, 3:6] = _rotation(x[6], x[7], x[8])
            H[:, 6:9] = _drot_v_dangles(x[6], x[7], x[8], x[3:6])
            return H

        def h_baro(x):
            return np.array([-x[2]])

        def H_baro(x):
            H = np.zeros((1, STATE_DIM))
            H[0, 2] = -1.0
            return H

        def h_airspeed(x):
            return np.array([0.5 * rho * x[3] * x[3]])

        def H_airspeed(x):
            H = np.zeros((1, STATE_DIM))
            H[0, 3] = rho * x[3]
            return H

        def h_mag(x):
            return np.array([x[8]])

        def H_mag(x):
            H = np.zeros((1, STATE_DIM))
            H[0, 8] = 1.0
            return H

        q = cfg.gate_quantile
        self.register_model(MeasurementModel(
            "gnss_pos", 2, h_gnss_pos, H_gnss_pos, np.diag(cfg.r_gnss_pos),
            gate_quantile=q))
        self.register_model(MeasurementModel(
            "gnss_vel", 3, h_gnss_vel, H_gnss_vel, np.eye(3) * cfg.r_gnss_vel,
            gate_quantile=q))
        self.register_model(MeasurementModel(
            "baro_alt", 1, h_baro, H_baro, np.array([[cfg.r_baro_alt]]),
            gate_quantile=q))
        # The pitot model reads the body-x velocity state as if the air were
        # still, so under strong wind it disagrees with the GNSS-driven
        # solution for as long as the wind blows.  Recovery would let that
        # known-approximate model drag the velocity states toward airspeed,
        # so it stays out once gated.
        self.register_model(MeasurementModel(
            "airspeed", 1, h_airspeed, H_airspeed, np.array([[cfg.r_airspeed]]),
            gate_quantile=q, gate_recovery=False))
        self.register_model(MeasurementModel(
            "mag_heading", 1, h_mag, H_mag, np.array([[cfg.r_mag]]),
            angular=(0,), gate_quantile=q))

    # -- lifecycle ------------------------------------------------------

    @property
    def initialized(self) -> bool:
        return self._initialized

    def initialize(self, p_n: float, p_e: float, p_d: float,
                   psi: float, va: float, v_ned: tuple | None = None) -> None:
        """Start the filter from a first position fix, heading, and airspeed.

        A ground-velocity fix, when available, seeds the velocity states;
        otherwise the airspeed stands in and any wind shows up as an initial
        innovation for the velocity updates to absorb.
        """
        cfg = self.config
        self._x = np.zeros(STATE_DIM)
        self._x[0:3] = (p_n, p_e, p_d)
        psi = wrap_angle(psi)
        if v_ned is not None:
            self._x[3:6] = _rotation(0.0, 0.0, psi).T @ np.asarray(v_ned)
        else:
            self._x[3] = max(0.0, va)
        self._x[8] = psi
        self._P = np.diag(
            [cfg.p0_pos] * 3 + [cfg.p0_vel] * 3 + [cfg.p0_att] * 3
            + [cfg.p0_bias] * 3)
        self._rejects = {name: 0 for name in self._models}
        self._initialized = True

    # -- propagation ----------------------------------------------------

    def propagate(self, gyro: tuple, accel: tuple) -> None:
        """One estimator step driven by the latest IMU sample."""
        if not self._initialized:
            raise RuntimeError("filter used before initialization")
        cfg = self.config
        dt = cfg.dt
        x = self._x
        v = x[3:6]
        phi, theta = x[6], x[7]
        T = _euler_rate_matrix(phi, theta)

        xdot, A = mechanization(x, gyro, accel)

        s_gyro = cfg.gyro_sigma ** 2 * cfg.imu_dt
        s_accel = cfg.accel_sigma ** 2 * cfg.imu_dt
        sk_v = _skew(v)
        Q = np.zeros((STATE_DIM, STATE_DIM))
        Q[3:6, 3:6] = s_accel * np.eye(3) + s_gyro * (sk_v @ sk_v.T)
        Q[3:6, 6:9] = s_gyro * (sk_v @ T.T)
        Q[6:9, 3:6] = Q[3:6, 6:9].T
        Q[6:9, 6:9] = s_gyro * (T @ T.T)
        Q[9:12, 9:12] = cfg.bias_walk_psd * np.eye(3)
        Q[np.diag_indices_from(Q)] += np.asarray(cfg.q_floor)

        x_new = x + dt * xdot
        x_new[6] = wrap_angle(x_new[6])
        x_new[8] = wrap_angle(x_new[8])
        self._x = x_new
        # first-order transition keeps P positive semidefinite by construction
        Phi = _I12 + dt * A
        P = Phi @ self._P @ Phi.T + dt * Q
        self._P = 0.5 * (P + P.T)

    # -- updates --------------------------------------------------------

    def update(self, name: str, z, noise: np.ndarray | None = None) -> UpdateResult:
        """Fuse one measurement by model name; Joseph-form covariance update."""
        if not self._initialized:
            raise RuntimeError("filter used before initialization")
        model = self._models.get(name)
        if model is None:
            raise KeyError(f"no measurement model named '{name}'")
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (model.dim,):
            raise ValueError(f"'{name}' expects {model.dim} values, got {z.shape}")
        R = model.noise if noise is None else np.atleast_2d(noise)

        x, P = self._x, self._P
        r = z - model.predict(x)
        for i in model.angular:
            r[i] = wrap_angle(r[i])
        H = model.jacobian(x)
        S = H @ P @ H.T + R
        S_inv = np.linalg.inv(S)
        nis = float(r @ S_inv @ r)
        gate = self._gates.get(name)
        recovered = False
        if gate is not None and nis > gate:
            self._rejects[name] = self._rejects.get(name, 0) + 1
            if (not model.gate_recovery
                    or self._rejects[name] < self.config.gate_recovery_after):
                return UpdateResult(accepted=False, nis=nis, innovation=r)
            # A long rejection streak means the filter, not the sensor, is
            # off.  Accept at full weight: tempered or partial corrections
            # shrink as the discrepancy grows, which is exactly backwards
            # when the state estimate is the thing that has run away.
            recovered = True
        self._rejects[name] = 0

        K = P @ H.T @ S_inv
        x_new = x + K @ r
        x_new[6] = wrap_angle(x_new[6])
        x_new[8] = wrap_angle(x_new[8])
        self._x = x_new
        IKH = _I12 - K @ H
        P_new = IKH @ P @ IKH.T + K @ R @ K.T
        self._P = 0.5 * (P_new + P_new.T)
        return UpdateResult(accepted=True, nis=nis, innovation=r,
                            recovered=recovered)

    # -- outputs --------------------------------------------------------

    @property
    def covariance(self) -> np.ndarray:
        return self._P.copy()

    @property
    def state_vector(self) -> np.ndarray:
        return self._x.copy()

    @property
    def state(self) -> EstimatedState:
        x = self._x
        v_ned = _rotation(x[6], x[7], x[8]) @ x[3:6]
        vg = math.hypot(v_ned[0], v_ned[1])
        chi = math.atan2(v_ned[1], v_ned[0]) if vg > 1e-6 else x[8]
        return EstimatedState(
            p_n=x[0], p_e=x[1], p_d=x[2], u=x[3], v=x[4], w=x[5],
            phi=x[6], theta=x[7], psi=x[8], b_p=x[9], b_q=x[10], b_r=x[11],
            chi=wrap_angle(chi), v_g=vg)
