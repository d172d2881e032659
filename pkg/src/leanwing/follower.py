"""Vector-field path following for straight lines and circular orbits.

Both laws are stateless maps from (path, position, course) to a commanded
course, altitude, and roll feedforward. The line field blends the approach
angle toward the path course as cross-track error shrinks; the orbit field
wraps the course around the circle tangent with a radial correction term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .frames import GRAVITY, wrap_angle


@dataclass(frozen=True)
class PathCommand:
    """Geometry handed from the path manager to the follower.

    kind "line": origin + unit direction (3D, slope carried by the down
    component). kind "orbit": center, radius, and turn direction (+1
    clockwise seen from above, -1 counterclockwise).
    """

    kind: str
    va_d: float
    origin: tuple = (0.0, 0.0, 0.0)
    direction: tuple = (1.0, 0.0, 0.0)
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.0
    turn: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("line", "orbit"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if not self.va_d > 0:
            raise ValueError("va_d must be positive")
        if self.kind == "line":
            norm = math.sqrt(sum(c * c for c in self.direction))
            if not norm > 0:
                raise ValueError("line direction must be nonzero")
            if abs(norm - 1.0) > 1e-9:
                object.__setattr__(
                    self, "direction", tuple(c / norm for c in self.direction))
            dn, de, _ = self.direction
            if math.hypot(dn, de) < 1e-9:
                raise ValueError("line direction cannot be vertical")
        else:
            if not self.radius > 0:
                raise ValueError("orbit radius must be positive")
            if self.turn not in (1, -1):
                raise ValueError("orbit turn must be +1 or -1")


@dataclass(frozen=True)
class FollowerConfig:
    chi_inf: float = math.pi / 2   # approach course far from the line
    k_path: float = 0.015          # 1/m, line convergence gain
    k_orbit: float = 4.0           # orbit convergence gain
    g: float = GRAVITY
    orbit_feedforward: bool = True # bank into orbits ahead of the course error

    def __post_init__(self) -> None:
        if not 0 < self.chi_inf <= math.pi / 2:
            raise ValueError("chi_inf must be in (0, pi/2]")
        if self.k_path <= 0 or self.k_orbit <= 0 or self.g <= 0:
            raise ValueError("follower gains must be positive")


@dataclass(frozen=True)
class FollowerOutput:
    chi_c: float
    h_c: float
    phi_ff: float


def follow(path: PathCommand, p_n: float, p_e: float, p_d: float,
           chi: float, config: FollowerConfig = FollowerConfig(),
           prev: FollowerOutput | None = None) -> FollowerOutput:
    """Course/altitude setpoints for the current position on the given path.

    Near an orbit center the tangent direction is undefined; there the
    previous output is held when provided (otherwise the current course).
    """
    if path.kind == "line":
        return _follow_line(path, p_n, p_e, p_d, config)
    return _follow_orbit(path, p_n, p_e, chi, config, prev)


def _follow_line(path: PathCommand, p_n: float, p_e: float, p_d: float,
                 config: FollowerConfig) -> FollowerOutput:
    rn, re, rd = path.origin
    qn, qe, qd = path.direction
    h_norm = math.hypot(qn, qe)
    chi_q = math.atan2(qe, qn)
    dn, de = p_n - rn, p_e - re
    # cross-track error in the path frame
    e_py = -math.sin(chi_q) * dn + math.cos(chi_q) * de
    chi_c = wrap_angle(
        chi_q - config.chi_inf * (2.0 / math.pi) * math.atan(config.k_path * e_py))
    # altitude from the along-track projection onto the sloped line
    s = (dn * qn + de * qe) / h_norm
    h_c = -(rd + s * qd / h_norm)
    return FollowerOutput(chi_c=chi_c, h_c=h_c, phi_ff=0.0)


def _follow_orbit(path: PathCommand, p_n: float, p_e: float, chi: float,
                  config: FollowerConfig,
                  prev: FollowerOutput | None) -> FollowerOutput:
    cn, ce, cd = path.center
    dn, de = p_n - cn, p_e - ce
    d = math.hypot(dn, de)
    phi_ff = 0.0
    if config.orbit_feedforward:
        phi_ff = path.turn * math.atan(
            path.va_d ** 2 / (config.g * path.radius))
    if d < 0.1:
        if prev is not None:
            return FollowerOutput(chi_c=prev.chi_c, h_c=-cd, phi_ff=phi_ff)
        return FollowerOutput(chi_c=chi, h_c=-cd, phi_ff=phi_ff)
    angular = math.atan2(de, dn)
    chi_c = wrap_angle(
        angular + path.turn * (math.pi / 2.0
                               + math.atan(config.k_orbit * (d - path.radius) / path.radius)))
    return FollowerOutput(chi_c=chi_c, h_c=-cd, phi_ff=phi_ff)
