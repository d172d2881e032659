"""6-DOF rigid-body flight dynamics: equations of motion, RK4 stepping, wind, trim.

The state is the 12-vector (p_n, p_e, p_d, u, v, w, phi, theta, psi, p, q, r).
Integration is fixed-step classical RK4 with forces re-evaluated at every
stage. The trim solver finds the state/actuator pair whose prescribed state
derivatives vanish for straight, climbing, or orbiting flight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .aero import AircraftParams, ControlSurfaces, MAX_DEFLECTION, ForcesMoments, forces_raw
from .frames import StateVector, WindVector, wrap_angle

DT_DYNAMICS_MAX = 0.02  # s, upper bound for a single RK4 step
TRIM_RESIDUAL_TOL = 1e-8


class SimFault(RuntimeError):
    """The model produced a non-finite or singular state; the run must halt."""


class TrimInfeasibleError(RuntimeError):
    def __init__(self, message: str, residual_norm: float):
        super().__init__(message)
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class TrimSpec:
    """Steady flight condition: airspeed, flight-path angle, optional orbit radius.

    orbit_radius None means straight flight; the sign sets the turn direction
    (positive = clockwise seen from above).
    """

    va: float
    gamma: float = 0.0
    orbit_radius: float | None = None

    def __post_init__(self) -> None:
        if not self.va > 0:
            raise ValueError("trim airspeed must be positive")
        if not abs(self.gamma) < math.pi / 2:
            raise ValueError("flight-path angle must be inside (-pi/2, pi/2)")
        if self.orbit_radius is not None and abs(self.orbit_radius) <= 10.0:
            raise ValueError("orbit radius must exceed 10 m")


@dataclass(frozen=True)
class TrimResult:
    state: StateVector
    surfaces: ControlSurfaces
    residual_norm: float
    iterations: int


def _derivatives(x: tuple, fx: float, fy: float, fz: float,
                 ml: float, mm: float, mn: float, params: AircraftParams) -> tuple:
    """Raw 12-state derivative; x is the plain state tuple."""
    _, _, _, u, v, w, phi, theta, _, p, q, r = x
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)

    # position kinematics: R(body->NED) @ v_body
    spsi, cpsi = math.sin(x[8]), math.cos(x[8])
    pn_dot = cth * cpsi * u + (sphi * sth * cpsi - cphi * spsi) * v \
        + (cphi * sth * cpsi + sphi * spsi) * w
    pe_dot = cth * spsi * u + (sphi * sth * spsi + cphi * cpsi) * v \
        + (cphi * sth * spsi - sphi * cpsi) * w
    pd_dot = -sth * u + sphi * cth * v + cphi * cth * w

    inv_m = 1.0 / params.mass
    u_dot = r * v - q * w + fx * inv_m
    v_dot = p * w - r * u + fy * inv_m
    w_dot = q * u - p * v + fz * inv_m

    if abs(cth) < 1e-9:
        raise SimFault("pitch reached the gimbal-lock guard during propagation")
    tth = sth / cth
    phi_dot = p + sphi * tth * q + cphi * tth * r
    theta_dot = cphi * q - sphi * r
    psi_dot = (sphi * q + cphi * r) / cth

    _, g1, g2, g3, g4, g5, g6, g7, g8 = params.gammas
    p_dot = g1 * p * q - g2 * q * r + g3 * ml + g4 * mn
    q_dot = g5 * p * r - g6 * (p * p - r * r) + mm / params.Jy
    r_dot = g7 * p * q - g1 * q * r + g4 * ml + g8 * mn

    return (pn_dot, pe_dot, pd_dot, u_dot, v_dot, w_dot,
            phi_dot, theta_dot, psi_dot, p_dot, q_dot, r_dot)


def state_derivative(state: StateVector, fm: ForcesMoments,
                     params: AircraftParams) -> np.ndarray:
    """Time derivative of the 12-state vector under the given forces/moments."""
    x = (state.p_n, state.p_e, state.p_d, state.u, state.v, state.w,
         state.phi, state.theta, state.psi, state.p, state.q, state.r)
    return np.array(_derivatives(x, fm.fx, fm.fy, fm.fz, fm.l, fm.m, fm.n, params))


def _rk4_raw(x: tuple, surfaces: ControlSurfaces, wind: WindVector,
             params: AircraftParams, dt: float) -> tuple:
    da, de, dr, dthr = surfaces.delta_a, surfaces.delta_e, surfaces.delta_r, surfaces.delta_t
    wn, we, wd = wind.w_n, wind.w_e, wind.w_d

    def f(xs: tuple) -> tuple:
        fm = forces_raw(xs, da, de, dr, dthr, wn, we, wd, params)
        return _derivatives(xs, *fm, params)

    k1 = f(x)
    k2 = f(tuple(xi + 0.5 * dt * ki for xi, ki in zip(x, k1)))
    k3 = f(tuple(xi + 0.5 * dt * ki for xi, ki in zip(x, k2)))
    k4 = f(tuple(xi + dt * ki for xi, ki in zip(x, k3)))
    return tuple(
        xi + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4))


def rk4_step(state: StateVector, surfaces: ControlSurfaces, wind: WindVector,
             params: AircraftParams, dt: float) -> StateVector:
    """Advance the state one fixed RK4 step, wrapping angles afterwards."""
    if not 0.0 < dt <= DT_DYNAMICS_MAX:
        raise ValueError(f"dt={dt} outside (0, {DT_DYNAMICS_MAX}]")
    x = (state.p_n, state.p_e, state.p_d, state.u, state.v, state.w,
         state.phi, state.theta, state.psi, state.p, state.q, state.r)
    y = _rk4_raw(x, surfaces, wind, params, dt)
    if not all(math.isfinite(v) for v in y):
        raise SimFault("non-finite state after integration step")
    try:
        return StateVector(y[0], y[1], y[2], y[3], y[4], y[5],
                           wrap_angle(y[6]), y[7], wrap_angle(y[8]),
                           y[9], y[10], y[11])
    except ValueError as exc:
        raise SimFault(str(exc)) from exc


def _trim_state_surfaces(z: np.ndarray, spec: TrimSpec) -> tuple[tuple, ControlSurfaces, float]:
    """Build the candidate state tuple and surfaces from the trim variables."""
    alpha, beta, phi, de, da, dr, dthr = (float(v) for v in z)
    theta = alpha + spec.gamma
    u = spec.va * math.cos(alpha) * math.cos(beta)
    v = spec.va * math.sin(beta)
    w = spec.va * math.sin(alpha) * math.cos(beta)
    if spec.orbit_radius is None:
        psi_dot = 0.0
    else:
        psi_dot = spec.va * math.cos(spec.gamma) / spec.orbit_radius
    sth, cth = math.sin(theta), math.cos(theta)
    p = -psi_dot * sth
    q = psi_dot * math.sin(phi) * cth
    r = psi_dot * math.cos(phi) * cth
    x = (0.0, 0.0, -100.0, u, v, w, phi, theta, 0.0, p, q, r)
    surfaces = ControlSurfaces(delta_a=da, delta_e=de, delta_r=dr, delta_t=dthr)
    return x, surfaces, psi_dot


def _trim_residual(z: np.ndarray, spec: TrimSpec, params: AircraftParams) -> np.ndarray:
    x, surfaces, psi_dot = _trim_state_surfaces(z, spec)
    fm = forces_raw(x, surfaces.delta_a, surfaces.delta_e, surfaces.delta_r,
                    surfaces.delta_t, 0.0, 0.0, 0.0, params)
    xdot = _derivatives(x, *fm, params)
    # position-rate targets: only the climb rate is prescribed; pn/pe are free
    return np.array([
        xdot[2] + spec.va * math.sin(spec.gamma),
        xdot[3], xdot[4], xdot[5],
        xdot[6], xdot[7], xdot[8] - psi_dot,
        xdot[9], xdot[10], xdot[11],
    ])


def compute_trim(spec: TrimSpec, params: AircraftParams,
                 initial: TrimResult | None = None) -> TrimResult:
    """Solve for the steady state and actuator settings matching a trim spec.

    Deterministic for a fixed initial guess. Raises TrimInfeasibleError when
    the residual cannot be brought under the tolerance.
    """
    if initial is None:
        z0 = np.array([0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5])
    else:
        st = initial.state
        va = math.sqrt(st.u ** 2 + st.v ** 2 + st.w ** 2)
        z0 = np.array([
            math.atan2(st.w, st.u),
            math.asin(max(-1.0, min(1.0, st.v / va))) if va > 0 else 0.0,
            st.phi,
            initial.surfaces.delta_e, initial.surfaces.delta_a,
            initial.surfaces.delta_r, initial.surfaces.delta_t,
        ])
    lim = MAX_DEFLECTION
    lower = [-0.5, -0.5, -1.2, -lim, -lim, -lim, 0.0]
    upper = [0.5, 0.5, 1.2, lim, lim, lim, 1.0]
    sol = least_squares(
        _trim_residual, np.clip(z0, lower, upper), args=(spec, params),
        bounds=(lower, upper), method="trf",
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    residual_norm = float(np.linalg.norm(sol.fun))
    if residual_norm >= TRIM_RESIDUAL_TOL:
        raise TrimInfeasibleError(
            f"trim infeasible for {spec}: residual {residual_norm:.3e}", residual_norm)
    x, surfaces, _ = _trim_state_surfaces(sol.x, spec)
    state = StateVector(*x)
    return TrimResult(state=state, surfaces=surfaces,
                      residual_norm=residual_norm, iterations=int(sol.njev or 0))


class WindModel:
    """Steady wind plus optional zero-mean Gaussian gusts, reproducible by seed."""

    def __init__(self, steady: WindVector = WindVector(),
                 gust_sigma: tuple[float, float, float] = (0.0, 0.0, 0.0),
                 seed: int | None = None):
        if any(s < 0 for s in gust_sigma):
            raise ValueError("gust sigmas must be non-negative")
        self.steady = steady
        self.gust_sigma = tuple(float(s) for s in gust_sigma)
        self._rng = np.random.default_rng(seed)
        self._gusty = any(s > 0 for s in self.gust_sigma)

    def sample(self) -> WindVector:
        """Wind for one dynamics step."""
        if not self._gusty:
            return self.steady
        g = self._rng.normal(0.0, self.gust_sigma)
        return WindVector(self.steady.w_n + g[0], self.steady.w_e + g[1],
                          self.steady.w_d + g[2])
