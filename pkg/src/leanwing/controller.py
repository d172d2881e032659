"""Cascaded flight controller with a safe-altitude phase machine.

Lateral control is course -> roll -> aileron; longitudinal control is either
successive loop closure (altitude -> pitch -> elevator, airspeed -> throttle)
or an energy-balance scheme that trades altitude and airspeed errors between
throttle and pitch. Every integrator uses back-calculation anti-windup. The
phase machine keeps the lateral and integral paths quiet until the vehicle is
safely climbing away from the ground; transitions only move forward.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .aero import ControlSurfaces, MAX_DEFLECTION
from .frames import GRAVITY, wrap_angle


class FlightPhase(enum.Enum):
    TAKEOFF = "takeoff"
    CLIMB = "climb"
    AUTO = "auto"


@dataclass(frozen=True)
class AutopilotCommand:
    """Setpoints handed down by the path follower (or an operator override)."""

    va_c: float
    h_c: float
    chi_c: float
    phi_ff: float = 0.0


@dataclass(frozen=True)
class ControlFeedback:
    """Measured/estimated quantities the loops close on."""

    phi: float
    theta: float
    chi: float
    h: float
    va: float
    p: float
    q: float


@dataclass(frozen=True)
class ControllerConfig:
    ts: float = 0.01
    longitudinal: str = "slc"          # "slc" or "tecs"
    phi_max: float = math.radians(35.0)
    theta_max: float = math.radians(25.0)
    # course -> roll
    chi_kp: float = 3.8
    chi_ki: float = 1.4
    # roll -> aileron
    roll_kp: float = 1.5
    roll_kd: float = 0.1
    # altitude -> pitch
    alt_kp: float = 0.05
    alt_ki: float = 0.012
    # pitch -> elevator
    pitch_kp: float = -3.5
    pitch_kd: float = -0.45
    # airspeed -> throttle
    va_kp: float = 0.08
    va_ki: float = 0.05
    delta_t_trim: float = 0.33
    # energy-balance longitudinal loops
    tecs_throttle_kp: float = 0.004
    tecs_throttle_ki: float = 0.0015
    tecs_pitch_kp: float = 0.0035
    tecs_pitch_ki: float = 0.001
    # phase machine (the quadratic motor model is strong; modest throttles
    # already out-climb any reasonable airframe)
    takeoff_throttle: float = 0.45
    takeoff_pitch: float = math.radians(12.0)
    h_takeoff: float = 20.0
    h_band: float = 10.0
    climb_throttle: float = 0.42
    climb_pitch: float = math.radians(8.0)

    def __post_init__(self) -> None:
        if self.longitudinal not in ("slc", "tecs"):
            raise ValueError("longitudinal scheme must be 'slc' or 'tecs'")
        if not 0 < self.ts <= 0.1:
            raise ValueError("controller period must be in (0, 0.1] s")
        if not 0 < self.phi_max <= math.radians(60):
            raise ValueError("phi_max must be in (0, 60] deg")
        if not 0 < self.theta_max <= math.radians(45):
            raise ValueError("theta_max must be in (0, 45] deg")
        if self.h_takeoff <= 0 or self.h_band <= 0:
            raise ValueError("phase-machine altitudes must be positive")
        if not 0 <= self.takeoff_throttle <= 1 or not 0 <= self.climb_throttle <= 1:
            raise ValueError("phase throttles must be in [0, 1]")


class PiLoop:
    """PI with trapezoidal integration and back-calculation anti-windup."""

    def __init__(self, kp: float, ki: float, limit_lo: float, limit_hi: float,
                 ts: float):
        self.kp, self.ki = kp, ki
        self.limit_lo, self.limit_hi = limit_lo, limit_hi
        self.ts = ts
        self.integrator = 0.0
        self._error_prev = 0.0

    def reset(self) -> None:
        self.integrator = 0.0
        self._error_prev = 0.0

    def update(self, error: float, feedforward: float = 0.0) -> float:
        self.integrator += 0.5 * self.ts * (error + self._error_prev)
        self._error_prev = error
        u = self.kp * error + self.ki * self.integrator + feedforward
        u_sat = min(self.limit_hi, max(self.limit_lo, u))
        if self.ki != 0.0 and u != u_sat:
            # unwind exactly the amount that saturated
            self.integrator += (u_sat - u) / self.ki
        return u_sat


def _pd(kp: float, kd: float, error: float, rate: float,
        lo: float, hi: float) -> float:
    return min(hi, max(lo, kp * error - kd * rate))


class Autopilot:
    """Maps follower setpoints and state feedback to actuator commands."""

    def __init__(self, config: ControllerConfig = ControllerConfig()):
        self.config = config
        c = config
        self._course = PiLoop(c.chi_kp, c.chi_ki, -c.phi_max, c.phi_max, c.ts)
        self._alt = PiLoop(c.alt_kp, c.alt_ki, -c.theta_max, c.theta_max, c.ts)
        self._va = PiLoop(c.va_kp, c.va_ki, -c.delta_t_trim,
                          1.0 - c.delta_t_trim, c.ts)
        self._energy = PiLoop(c.tecs_throttle_kp, c.tecs_throttle_ki,
                              -c.delta_t_trim, 1.0 - c.delta_t_trim, c.ts)
        self._balance = PiLoop(c.tecs_pitch_kp, c.tecs_pitch_ki,
                               -c.theta_max, c.theta_max, c.ts)
        self._phase = FlightPhase.TAKEOFF

    @property
    def phase(self) -> FlightPhase:
        return self._phase

    def reset(self) -> None:
        for loop in (self._course, self._alt, self._va, self._energy, self._balance):
            loop.reset()
        self._phase = FlightPhase.TAKEOFF

    def _advance_phase(self, h: float, h_c: float) -> None:
        c = self.config
        if self._phase is FlightPhase.TAKEOFF and h > c.h_takeoff:
            self._phase = FlightPhase.CLIMB
        if self._phase is FlightPhase.CLIMB and h > h_c - c.h_band:
            self._phase = FlightPhase.AUTO

    def update(self, cmd: AutopilotCommand, fb: ControlFeedback) -> ControlSurfaces:
        c = self.config
        self._advance_phase(fb.h, cmd.h_c)
        phase = self._phase

        if phase is FlightPhase.TAKEOFF:
            # wings level, fixed pitch and throttle; course loop stays off
            phi_c = 0.0
            theta_c = c.takeoff_pitch
            delta_t = c.takeoff_throttle
        elif phase is FlightPhase.CLIMB:
            phi_c = self._course_to_roll(cmd, fb, integrate=False)
            theta_c = c.climb_pitch
            delta_t = c.climb_throttle
        else:
            phi_c = self._course_to_roll(cmd, fb, integrate=True)
            if c.longitudinal == "slc":
                theta_c = self._alt.update(cmd.h_c - fb.h)
                delta_t = c.delta_t_trim + self._va.update(cmd.va_c - fb.va)
            else:
                h_err = cmd.h_c - fb.h
                ke_err = 0.5 * (cmd.va_c ** 2 - fb.va ** 2)
                delta_t = c.delta_t_trim + self._energy.update(
                    GRAVITY * h_err + ke_err)
                theta_c = self._balance.update(GRAVITY * h_err - ke_err)

        delta_a = _pd(c.roll_kp, c.roll_kd, phi_c - fb.phi, fb.p,
                      -MAX_DEFLECTION, MAX_DEFLECTION)
        delta_e = _pd(c.pitch_kp, c.pitch_kd, theta_c - fb.theta, fb.q,
                      -MAX_DEFLECTION, MAX_DEFLECTION)
        return ControlSurfaces(delta_a=delta_a, delta_e=delta_e,
                               delta_r=0.0, delta_t=delta_t)

    def _course_to_roll(self, cmd: AutopilotCommand, fb: ControlFeedback,
                        integrate: bool) -> float:
        c = self.config
        err = wrap_angle(cmd.chi_c - fb.chi)
        if not integrate:
            # proportional-only during climb so no windup accrues before AUTO
            return min(c.phi_max, max(-c.phi_max, c.chi_kp * err + cmd.phi_ff))
        return self._course.update(err, feedforward=cmd.phi_ff)
