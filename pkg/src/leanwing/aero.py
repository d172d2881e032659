"""Aerodynamic and propulsive force/moment model driven by a coefficient file.

The coefficient set (stability and control derivatives, stall blending,
propulsion constants) is loaded from a YAML parameters file; the evaluation
follows the classic body-frame superposition of gravity, quasi-steady
aerodynamics about the stability axes, and a quadratic throttle motor model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .frames import GRAVITY, StateVector, WindVector

MAX_DEFLECTION = 0.785  # rad, hard actuator stop for every control surface


class ParamFileError(ValueError):
    """Raised when the aerodynamic parameters file is malformed or inconsistent."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class ControlSurfaces:
    """Actuator commands: deflections in rad, throttle in [0, 1]."""

    delta_a: float = 0.0
    delta_e: float = 0.0
    delta_r: float = 0.0
    delta_t: float = 0.0

    def __post_init__(self) -> None:
        for name in ("delta_a", "delta_e", "delta_r"):
            d = getattr(self, name)
            if not math.isfinite(d) or abs(d) > MAX_DEFLECTION + 1e-12:
                raise ValueError(f"{name}={d!r} outside +/-{MAX_DEFLECTION} rad")
        if not math.isfinite(self.delta_t) or not 0.0 <= self.delta_t <= 1.0:
            raise ValueError(f"delta_t={self.delta_t!r} outside [0, 1]")


@dataclass(frozen=True)
class ForcesMoments:
    """Body-frame forces (N) and moments (N*m)."""

    fx: float
    fy: float
    fz: float
    l: float
    m: float
    n: float

    def __post_init__(self) -> None:
        for v in (self.fx, self.fy, self.fz, self.l, self.m, self.n):
            if not math.isfinite(v):
                raise ValueError("non-finite force/moment")


@dataclass(frozen=True)
class AircraftParams:
    """Mass, geometry, aerodynamic derivatives, and propulsion constants."""

    mass: float
    Jx: float
    Jy: float
    Jz: float
    Jxz: float
    S_wing: float
    b_span: float
    c_chord: float
    rho_air: float
    e_oswald: float
    # lift
    C_L0: float
    C_Lalpha: float
    C_Lq: float
    C_Ldelta_e: float
    # drag
    C_Dp: float
    C_D0: float = 0.0
    C_Dalpha: float = 0.0
    linear_drag: bool = False
    # side force
    C_Y0: float = 0.0
    C_Ybeta: float = 0.0
    C_Yp: float = 0.0
    C_Yr: float = 0.0
    C_Ydelta_a: float = 0.0
    C_Ydelta_r: float = 0.0
    # roll moment
    C_l0: float = 0.0
    C_lbeta: float = 0.0
    C_lp: float = 0.0
    C_lr: float = 0.0
    C_ldelta_a: float = 0.0
    C_ldelta_r: float = 0.0
    # pitch moment
    C_m0: float = 0.0
    C_malpha: float = 0.0
    C_mq: float = 0.0
    C_mdelta_e: float = 0.0
    # yaw moment
    C_n0: float = 0.0
    C_nbeta: float = 0.0
    C_np: float = 0.0
    C_nr: float = 0.0
    C_ndelta_a: float = 0.0
    C_ndelta_r: float = 0.0
    # stall blending
    alpha0: float = 0.47
    M_blend: float = 50.0
    # propulsion
    S_prop: float = 0.2027
    C_prop: float = 1.0
    k_motor: float = 80.0
    k_Tp: float = 0.0
    k_Omega: float = 0.0
    allow_unstable: bool = False
    # inertia couplings, precomputed at construction
    _gammas: tuple = field(default=(), repr=False, compare=False)

    @property
    def AR(self) -> float:
        return self.b_span ** 2 / self.S_wing

    @property
    def gammas(self) -> tuple:
        return self._gammas

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ParamFileError(f"mass must be positive, got {self.mass}", key="mass")
        for name in ("Jx", "Jy", "Jz"):
            if getattr(self, name) <= 0:
                raise ParamFileError(f"{name} must be positive", key=name)
        # with the Jxz coupling the inertia matrix is PD iff Jx*Jz - Jxz^2 > 0
        if self.Jx * self.Jz - self.Jxz ** 2 <= 0:
            raise ParamFileError("inertia not positive definite", key="Jxz")
        for name in ("S_wing", "b_span", "c_chord", "rho_air"):
            if getattr(self, name) <= 0:
                raise ParamFileError(f"{name} must be positive", key=name)
        if not 0.0 < self.e_oswald <= 1.0:
            raise ParamFileError("e_oswald must be in (0, 1]", key="e_oswald")
        if not self.allow_unstable:
            if self.C_Lalpha <= 0:
                raise ParamFileError(
                    "C_Lalpha must be positive for a statically stable airframe "
                    "(set allow_unstable to override)", key="C_Lalpha")
            if self.C_malpha >= 0:
                raise ParamFileError(
                    "C_malpha must be negative for a statically stable airframe "
                    "(set allow_unstable to override)", key="C_malpha")
        if self.linear_drag and (self.C_D0 == 0.0 and self.C_Dalpha == 0.0):
            raise ParamFileError(
                "linear drag mode requires C_D0/C_Dalpha", key="C_D0")
        g = self.Jx * self.Jz - self.Jxz ** 2
        object.__setattr__(self, "_gammas", (
            g,
            self.Jxz * (self.Jx - self.Jy + self.Jz) / g,
            (self.Jz * (self.Jz - self.Jy) + self.Jxz ** 2) / g,
            self.Jz / g,
            self.Jxz / g,
            (self.Jz - self.Jx) / self.Jy,
            self.Jxz / self.Jy,
            ((self.Jx - self.Jy) * self.Jx + self.Jxz ** 2) / g,
            self.Jx / g,
        ))


# file schema: section -> key -> required flag
_SCHEMA: dict[str, dict[str, bool]] = {
    "inertia": {"mass": True, "Jx": True, "Jy": True, "Jz": True, "Jxz": True},
    "geometry": {"S_wing": True, "b_span": True, "c_chord": True,
                 "rho_air": True, "e_oswald": True},
    "propulsion": {"S_prop": True, "C_prop": True, "k_motor": True,
                   "k_Tp": False, "k_Omega": False},
}
_AERO_SCHEMA: dict[str, dict[str, bool]] = {
    "lift": {"C_L0": True, "C_Lalpha": True, "C_Lq": True, "C_Ldelta_e": True},
    "drag": {"C_Dp": True, "C_D0": False, "C_Dalpha": False, "linear": False},
    "side": {"C_Y0": True, "C_Ybeta": True, "C_Yp": True, "C_Yr": True,
             "C_Ydelta_a": True, "C_Ydelta_r": True},
    "roll": {"C_l0": True, "C_lbeta": True, "C_lp": True, "C_lr": True,
             "C_ldelta_a": True, "C_ldelta_r": True},
    "pitch": {"C_m0": True, "C_malpha": True, "C_mq": True, "C_mdelta_e": True},
    "yaw": {"C_n0": True, "C_nbeta": True, "C_np": True, "C_nr": True,
            "C_ndelta_a": True, "C_ndelta_r": True},
    "stall": {"alpha0": True, "M_blend": True},
}


def _take_section(doc: Mapping[str, Any], name: str, schema: Mapping[str, bool],
                  out: dict[str, Any], prefix: str = "") -> None:
    section = doc.get(name)
    if section is None:
        raise ParamFileError(f"missing section '{prefix}{name}'", key=name)
    if not isinstance(section, Mapping):
        raise ParamFileError(f"section '{prefix}{name}' must be a mapping", key=name)
    for key in section:
        if key not in schema:
            raise ParamFileError(f"unknown key '{key}' in section '{prefix}{name}'", key=key)
    for key, required in schema.items():
        if key in section:
            value = section[key]
            if key == "linear":
                if not isinstance(value, bool):
                    raise ParamFileError("drag 'linear' flag must be boolean", key=key)
                out["linear_drag"] = value
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParamFileError(f"key '{key}' must be a number", key=key)
            out[key] = float(value)
        elif required:
            raise ParamFileError(f"missing required key '{key}' in '{prefix}{name}'", key=key)


def load_params(source: bytes | str, allow_unstable: bool = False) -> AircraftParams:
    """Parse and validate an aerodynamic parameters file (YAML text or bytes)."""
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ParamFileError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParamFileError("parameters file must be a YAML mapping")
    known_top = set(_SCHEMA) | {"aero", "name"}
    for key in doc:
        if key not in known_top:
            raise ParamFileError(f"unknown top-level key '{key}'", key=key)
    fields: dict[str, Any] = {}
    for name in ("inertia", "geometry", "propulsion"):
        _take_section(doc, name, _SCHEMA[name], fields)
    aero = doc.get("aero")
    if aero is None or not isinstance(aero, Mapping):
        raise ParamFileError("missing section 'aero'", key="aero")
    for key in aero:
        if key not in _AERO_SCHEMA:
            raise ParamFileError(f"unknown key '{key}' in section 'aero'", key=key)
    for name, schema in _AERO_SCHEMA.items():
        _take_section(aero, name, schema, fields, prefix="aero.")
    return AircraftParams(allow_unstable=allow_unstable, **fields)


def load_params_file(path) -> AircraftParams:
    with open(path, "rb") as fh:
        return load_params(fh.read())


def _blend_sigma(alpha: float, alpha0: float, m_blend: float) -> float:
    """Sigmoid weight moving lift from the linear model to the flat plate past stall."""
    a = min(500.0, max(-500.0, -m_blend * (alpha - alpha0)))
    b = min(500.0, max(-500.0, m_blend * (alpha + alpha0)))
    ea, eb = math.exp(a), math.exp(b)
    return (1.0 + ea + eb) / ((1.0 + ea) * (1.0 + eb))


def longitudinal_coefficients(alpha: float, params: AircraftParams) -> tuple[float, float]:
    """Lift and drag coefficients as functions of angle of attack.

    Lift blends the linear slope into a flat-plate model around the stall
    angle; drag is parasitic plus quadratic induced (or the linear model when
    the file selects it).
    """
    linear = params.C_L0 + params.C_Lalpha * alpha
    sigma = _blend_sigma(alpha, params.alpha0, params.M_blend)
    plate = 2.0 * math.copysign(1.0, alpha) * math.sin(alpha) ** 2 * math.cos(alpha)
    c_l = (1.0 - sigma) * linear + sigma * plate
    if params.linear_drag:
        c_d = params.C_D0 + params.C_Dalpha * alpha
    else:
        c_d = params.C_Dp + linear ** 2 / (math.pi * params.e_oswald * params.AR)
    return c_l, c_d


def propeller_thrust_torque(delta_t: float, va: float,
                            params: AircraftParams) -> tuple[float, float]:
    """Quadratic throttle motor model: thrust along body x, reaction torque about it."""
    thrust = 0.5 * params.rho_air * params.S_prop * params.C_prop * (
        (params.k_motor * delta_t) ** 2 - va * va)
    torque = -params.k_Tp * (params.k_Omega * delta_t) ** 2
    return thrust, torque


def air_relative_velocity(state: StateVector,
                          wind: WindVector) -> tuple[float, float, float]:
    """Body-frame velocity relative to the (steady) air mass."""
    cphi, sphi = math.cos(state.phi), math.sin(state.phi)
    cth, sth = math.cos(state.theta), math.sin(state.theta)
    cpsi, spsi = math.cos(state.psi), math.sin(state.psi)
    wn, we, wd = wind.w_n, wind.w_e, wind.w_d
    # R.T @ w_ned, with R the body-to-NED matrix
    wx = cth * cpsi * wn + cth * spsi * we - sth * wd
    wy = ((sphi * sth * cpsi - cphi * spsi) * wn
          + (sphi * sth * spsi + cphi * cpsi) * we + sphi * cth * wd)
    wz = ((cphi * sth * cpsi + sphi * spsi) * wn
          + (cphi * sth * spsi - sphi * cpsi) * we + cphi * cth * wd)
    return state.u - wx, state.v - wy, state.w - wz


def forces_raw(x: tuple, da: float, de: float, dr: float, dthr: float,
               wn: float, we: float, wd: float, params: AircraftParams) -> tuple:
    """Scalar force/moment evaluation on the plain 12-state tuple.

    This is the integrator hot path; the typed wrapper below is the public
    entry point. At zero airspeed every aerodynamic term vanishes (the rate
    nondimensionalizations are suppressed rather than dividing by zero).
    """
    _, _, _, u, v, w, phi, theta, psi, p, q, r = x
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)

    mg = params.mass * GRAVITY
    fx = -sth * mg
    fy = sphi * cth * mg
    fz = cphi * cth * mg

    if wn != 0.0 or we != 0.0 or wd != 0.0:
        cpsi, spsi = math.cos(psi), math.sin(psi)
        # R.T @ w_ned, with R the body-to-NED matrix
        wx = cth * cpsi * wn + cth * spsi * we - sth * wd
        wy = ((sphi * sth * cpsi - cphi * spsi) * wn
              + (sphi * sth * spsi + cphi * cpsi) * we + sphi * cth * wd)
        wz = ((cphi * sth * cpsi + sphi * spsi) * wn
              + (cphi * sth * spsi - sphi * cpsi) * we + cphi * cth * wd)
        u_r, v_r, w_r = u - wx, v - wy, w - wz
    else:
        u_r, v_r, w_r = u, v, w
    va = math.sqrt(u_r * u_r + v_r * v_r + w_r * w_r)

    thrust = 0.5 * params.rho_air * params.S_prop * params.C_prop * (
        (params.k_motor * dthr) ** 2 - va * va)
    fx += thrust
    l = -params.k_Tp * (params.k_Omega * dthr) ** 2
    m = 0.0
    n = 0.0

    if va > 0.0:
        alpha = math.atan2(w_r, u_r)
        beta = math.asin(max(-1.0, min(1.0, v_r / va)))
        qbar_s = 0.5 * params.rho_air * va * va * params.S_wing
        b2v = params.b_span / (2.0 * va)
        c2v = params.c_chord / (2.0 * va)

        c_l, c_d = longitudinal_coefficients(alpha, params)
        f_lift = qbar_s * (c_l + params.C_Lq * c2v * q + params.C_Ldelta_e * de)
        f_drag = qbar_s * c_d
        ca, sa = math.cos(alpha), math.sin(alpha)
        # stability-to-body rotation through alpha only
        fx += -ca * f_drag + sa * f_lift
        fz += -sa * f_drag - ca * f_lift
        fy += qbar_s * (params.C_Y0 + params.C_Ybeta * beta
                        + params.C_Yp * b2v * p + params.C_Yr * b2v * r
                        + params.C_Ydelta_a * da + params.C_Ydelta_r * dr)
        l += qbar_s * params.b_span * (
            params.C_l0 + params.C_lbeta * beta
            + params.C_lp * b2v * p + params.C_lr * b2v * r
            + params.C_ldelta_a * da + params.C_ldelta_r * dr)
        m += qbar_s * params.c_chord * (
            params.C_m0 + params.C_malpha * alpha
            + params.C_mq * c2v * q + params.C_mdelta_e * de)
        n += qbar_s * params.b_span * (
            params.C_n0 + params.C_nbeta * beta
            + params.C_np * b2v * p + params.C_nr * b2v * r
            + params.C_ndelta_a * da + params.C_ndelta_r * dr)

    return fx, fy, fz, l, m, n


def forces_and_moments(state: StateVector, surfaces: ControlSurfaces,
                       wind: WindVector, params: AircraftParams) -> ForcesMoments:
    """Total body-frame forces and moments: gravity + aerodynamics + propulsion."""
    x = (state.p_n, state.p_e, state.p_d, state.u, state.v, state.w,
         state.phi, state.theta, state.psi, state.p, state.q, state.r)
    fx, fy, fz, l, m, n = forces_raw(
        x, surfaces.delta_a, surfaces.delta_e, surfaces.delta_r, surfaces.delta_t,
        wind.w_n, wind.w_e, wind.w_d, params)
    return ForcesMoments(fx=fx, fy=fy, fz=fz, l=l, m=m, n=n)
