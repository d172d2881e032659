"""Waypoint path manager: turns a mission into a stream of line/orbit paths.

Three following modes: "lines" switches segments on the bisecting half plane
at each waypoint (and overshoots corners by design), "fillets" inserts a
constant-radius arc inside each corner, "dubins" flies minimum-length
circle-line-circle paths between waypoints with prescribed courses. Segment
geometry is recomputed from the waypoint list on demand, so the only latched
state is the active index, the sub-path within a leg, and the half-plane
arming flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import yaml

from .follower import PathCommand
from .frames import GeodeticCoord, lla_to_ned, wrap_angle

TWO_PI = 2.0 * math.pi
_ARC_SNAP = 1e-9   # full-turn snap threshold, rad
MODES = ("lines", "fillets", "dubins")


class MissionError(ValueError):
    """Raised for malformed or unflyable mission definitions."""


@dataclass(frozen=True)
class Waypoint:
    n: float
    e: float
    d: float
    va_d: float
    course: float | None = None  # rad, required by dubins mode

    def __post_init__(self) -> None:
        for v in (self.n, self.e, self.d, self.va_d):
            if not math.isfinite(v):
                raise MissionError("waypoint fields must be finite")
        if not self.va_d > 0:
            raise MissionError("waypoint airspeed must be positive")
        if self.course is not None:
            object.__setattr__(self, "course", wrap_angle(self.course))


@dataclass(frozen=True)
class Mission:
    waypoints: tuple
    mode: str = "lines"
    loop: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise MissionError(f"unknown mission mode {self.mode!r}")
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if self.mode == "dubins":
            for wp in self.waypoints:
                if wp.course is None:
                    raise MissionError("dubins missions need a course at every waypoint")


@dataclass(frozen=True)
class DubinsPath:
    """Circle-line-circle geometry between two posed waypoints."""

    radius: float
    length: float
    c_s: tuple       # start circle center (3D)
    lam_s: int
    z1: tuple        # start of the straight segment
    q1: tuple        # unit direction of the straight segment
    z2: tuple        # end of the straight segment
    c_e: tuple       # end circle center (3D)
    lam_e: int
    z3: tuple        # terminal point
    q3: tuple        # terminal course direction


def _arc_angle(lam: int, chi_from: float, chi_to: float) -> float:
    """Swept angle turning with direction lam from one course to another."""
    a = (lam * (chi_to - chi_from)) % TWO_PI
    if a >= TWO_PI - _ARC_SNAP:
        # a numerically full turn is no turn
        return 0.0
    return a


def compute_dubins(ps: tuple, chi_s: float, pe: tuple, chi_e: float,
                   radius: float) -> DubinsPath:
    """Shortest circle-line-circle path between two posed points.

    Works in the horizontal plane; down components interpolate from the start
    pose (arcs and line start) to the end pose. The straight-segment course is
    found from the course of the line of centers: equal turn directions use
    the external tangent, opposite directions tilt it by asin(2R/l).
    """
    if radius <= 0:
        raise ValueError("dubins radius must be positive")
    best = None
    for lam_s in (1, -1):
        cs_n = ps[0] + radius * math.cos(chi_s + lam_s * math.pi / 2.0)
        cs_e = ps[1] + radius * math.sin(chi_s + lam_s * math.pi / 2.0)
        for lam_e in (1, -1):
            ce_n = pe[0] + radius * math.cos(chi_e + lam_e * math.pi / 2.0)
            ce_e = pe[1] + radius * math.sin(chi_e + lam_e * math.pi / 2.0)
            dn, de = ce_n - cs_n, ce_e - cs_e
            ell = math.hypot(dn, de)
            delta = math.atan2(de, dn)
            if lam_s == lam_e:
                chi_l = delta
                s = ell
            else:
                if ell < 2.0 * radius:
                    continue
                chi_l = delta + lam_s * math.asin(2.0 * radius / ell)
                s = math.sqrt(ell * ell - 4.0 * radius * radius)
            arc_s = _arc_angle(lam_s, chi_s, chi_l)
            arc_e = _arc_angle(lam_e, chi_l, chi_e)
            length = s + radius * (arc_s + arc_e)
            if best is None or length < best[0]:
                best = (length, lam_s, lam_e, (cs_n, cs_e), (ce_n, ce_e), chi_l, s)
    if best is None:
        raise ValueError("no feasible circle-line-circle path")
    length, lam_s, lam_e, (cs_n, cs_e), (ce_n, ce_e), chi_l, s = best
    # departure/arrival points sit at course - lam*pi/2 from each center
    z1 = (cs_n + radius * math.cos(chi_l - lam_s * math.pi / 2.0),
          cs_e + radius * math.sin(chi_l - lam_s * math.pi / 2.0), ps[2])
    z2 = (ce_n + radius * math.cos(chi_l - lam_e * math.pi / 2.0),
          ce_e + radius * math.sin(chi_l - lam_e * math.pi / 2.0), pe[2])
    return DubinsPath(
        radius=radius, length=float(length),
        c_s=(cs_n, cs_e, ps[2]), lam_s=lam_s,
        z1=z1, q1=(math.cos(chi_l), math.sin(chi_l), 0.0), z2=z2,
        c_e=(ce_n, ce_e, pe[2]), lam_e=lam_e,
        z3=(pe[0], pe[1], pe[2]), q3=(math.cos(chi_e), math.sin(chi_e), 0.0))


def load_mission(source: bytes | str, origin: GeodeticCoord | None = None,
                 min_altitude: float = 0.0) -> Mission:
    """Parse a mission file; geodetic waypoints are converted about origin.

    Every waypoint must sit above min_altitude so the safe-altitude phase
    machine can hand over to the mission.
    """
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise MissionError(f"invalid YAML: {exc}") from exc
    return mission_from_doc(doc, origin=origin, min_altitude=min_altitude)


def mission_from_doc(doc, origin: GeodeticCoord | None = None,
                     min_altitude: float = 0.0) -> Mission:
    """Build a mission from an already-parsed document (YAML or JSON)."""
    if not isinstance(doc, dict):
        raise MissionError("mission file must be a YAML mapping")
    unknown = set(doc) - {"mode", "loop", "origin", "waypoints"}
    if unknown:
        raise MissionError(f"unknown mission keys {sorted(unknown)}")
    mode = doc.get("mode", "lines")
    loop = doc.get("loop", True)
    if not isinstance(loop, bool):
        raise MissionError("'loop' must be boolean")
    if "origin" in doc:
        o = doc["origin"]
        if not isinstance(o, dict) or set(o) != {"lat", "lon", "alt"}:
            raise MissionError("origin needs lat, lon, alt")
        origin = GeodeticCoord(float(o["lat"]), float(o["lon"]), float(o["alt"]))
    entries = doc.get("waypoints")
    if not isinstance(entries, list) or not entries:
        raise MissionError("mission needs a non-empty waypoint list")
    waypoints = []
    for i, entry in enumerate(entries):
        waypoints.append(_parse_waypoint(entry, i, origin))
    for i, wp in enumerate(waypoints):
        if -wp.d <= min_altitude:
            raise MissionError(
                f"waypoint {i} altitude {-wp.d:.1f} m is not above the "
                f"takeoff altitude {min_altitude:.1f} m")
    return Mission(waypoints=tuple(waypoints), mode=mode, loop=loop)


def load_mission_file(path, origin: GeodeticCoord | None = None,
                      min_altitude: float = 0.0) -> Mission:
    with open(path, "rb") as fh:
        return load_mission(fh.read(), origin=origin, min_altitude=min_altitude)


def waypoint_from_doc(entry, origin: GeodeticCoord | None = None) -> Waypoint:
    """Build one waypoint from a parsed document entry."""
    return _parse_waypoint(entry, 0, origin)


def mission_to_doc(mission: Mission) -> dict:
    """Plain-data form of a mission (NED waypoints), e.g. for the gateway."""
    return {
        "mode": mission.mode,
        "loop": mission.loop,
        "waypoints": [
            {
                "type": "ned",
                "position": [wp.n, wp.e, wp.d],
                "va_d": wp.va_d,
                **({"course_deg": math.degrees(wp.course)}
                   if wp.course is not None else {}),
            }
            for wp in mission.waypoints
        ],
    }


def _parse_waypoint(entry, index: int, origin: GeodeticCoord | None) -> Waypoint:
    if not isinstance(entry, dict):
        raise MissionError(f"waypoint {index} must be a mapping")
    unknown = set(entry) - {"type", "position", "va_d", "course_deg"}
    if unknown:
        raise MissionError(f"waypoint {index}: unknown keys {sorted(unknown)}")
    kind = entry.get("type", "ned")
    pos = entry.get("position")
    if not isinstance(pos, (list, tuple)) or len(pos) != 3:
        raise MissionError(f"waypoint {index}: position needs three numbers")
    try:
        va_d = float(entry["va_d"])
    except (KeyError, TypeError, ValueError):
        raise MissionError(f"waypoint {index}: missing or bad va_d") from None
    course = entry.get("course_deg")
    course_rad = math.radians(float(course)) if course is not None else None
    if kind == "ned":
        n, e, d = (float(v) for v in pos)
    elif kind == "lla":
        if origin is None:
            raise MissionError(
                f"waypoint {index} is geodetic but no origin is defined")
        point = GeodeticCoord(float(pos[0]), float(pos[1]), float(pos[2]))
        n, e, d = lla_to_ned(point, origin)
    else:
        raise MissionError(f"waypoint {index}: unknown type {kind!r}")
    return Waypoint(n=n, e=e, d=d, va_d=va_d, course=course_rad)


@dataclass(frozen=True)
class ManagerConfig:
    # 110 m keeps the bank for a 25 m/s arc near 30 deg, inside the roll
    # limit with margin for the feedback to work against gusts.
    r_min: float = 110.0           # m, arc radius for fillets and dubins
    hold_radius_factor: float = 2.0
    hold_va: float = 25.0          # airspeed for the no-mission hold orbit
    hold_altitude: float = 50.0    # m, hold altitude when no waypoint exists

    def __post_init__(self) -> None:
        if self.r_min <= 0 or self.hold_radius_factor < 1.0:
            raise ValueError("r_min must be positive and hold factor >= 1")
        if self.hold_va <= 0 or self.hold_altitude <= 0:
            raise ValueError("hold airspeed and altitude must be positive")


class PathManager:
    """Latches progress through a mission and emits the active path segment."""

    # dubins leg sub-states
    _START_ORBIT, _LINE, _END_ORBIT = 0, 1, 2

    def __init__(self, config: ManagerConfig = ManagerConfig()):
        self.config = config
        self._mission: Mission | None = None
        self._idx = 0          # index of the waypoint currently flown toward
        self._sub = 0          # fillet/dubins sub-state within the leg
        self._armed = False    # half-plane arming latch for dubins orbits
        self._done = False     # ran off the end of a non-looping mission

    # -- mission services -------------------------------------------------

    @property
    def mission(self) -> Mission | None:
        return self._mission

    @property
    def waypoint_index(self) -> int:
        return self._idx

    def set_mission(self, mission: Mission) -> None:
        if mission.mode == "dubins":
            self._check_dubins_spacing(mission.waypoints, mission.loop)
        self._mission = mission
        self._idx = 1 if len(mission.waypoints) > 1 else 0
        self._sub = self._START_ORBIT
        self._armed = False
        self._done = False

    def add_waypoint(self, wp: Waypoint) -> None:
        if self._mission is None:
            self.set_mission(Mission(waypoints=(wp,)))
            return
        m = self._mission
        if m.mode == "dubins":
            if wp.course is None:
                raise MissionError("dubins missions need a course at every waypoint")
            self._check_dubins_spacing((m.waypoints[-1], wp), loop=False)
        self._mission = Mission(waypoints=m.waypoints + (wp,), mode=m.mode,
                                loop=m.loop)
        self._done = False

    def clear_mission(self) -> None:
        self._mission = None
        self._idx = 0
        self._sub = self._START_ORBIT
        self._armed = False
        self._done = False

    def _check_dubins_spacing(self, waypoints: Sequence[Waypoint], loop: bool) -> None:
        pairs = list(zip(waypoints, waypoints[1:]))
        if loop and len(waypoints) > 1:
            pairs.append((waypoints[-1], waypoints[0]))
        for a, b in pairs:
            if math.hypot(b.n - a.n, b.e - a.e) < 3.0 * self.config.r_min:
                raise MissionError(
                    "dubins infeasible: consecutive waypoints closer than "
                    f"3x the turn radius ({3.0 * self.config.r_min:.0f} m)")

    # -- per-tick update ---------------------------------------------------

    def update(self, p_n: float, p_e: float, p_d: float) -> PathCommand:
        m = self._mission
        if m is None:
            return self._hold_orbit(None)
        if len(m.waypoints) < 3 and m.mode != "dubins":
            return self._hold_orbit(m.waypoints[-1])
        if len(m.waypoints) < 2 and m.mode == "dubins":
            return self._hold_orbit(m.waypoints[-1])
        if self._done:
            return self._hold_orbit(m.waypoints[-1])
        if m.mode == "lines":
            return self._manage_lines(m, p_n, p_e)
        if m.mode == "fillets":
            return self._manage_fillets(m, p_n, p_e)
        return self._manage_dubins(m, p_n, p_e)

    def _hold_orbit(self, wp: Waypoint | None) -> PathCommand:
        c = self.config
        if wp is None:
            center = (0.0, 0.0, -c.hold_altitude)
            va = c.hold_va
        else:
            center = (wp.n, wp.e, wp.d)
            va = wp.va_d
        return PathCommand(kind="orbit", va_d=va, center=center,
                           radius=c.hold_radius_factor * c.r_min, turn=1)

    def _wp(self, m: Mission, i: int) -> Waypoint:
        return m.waypoints[i % len(m.waypoints)]

    def _advance(self, m: Mission) -> bool:
        """Move to the next leg; returns False when the mission is finished."""
        n = len(m.waypoints)
        if not m.loop and self._idx + 1 >= n:
            self._done = True
            return False
        self._idx = (self._idx + 1) % n
        self._sub = self._START_ORBIT
        self._armed = False
        return True

    def _manage_lines(self, m: Mission, p_n: float, p_e: float) -> PathCommand:
        # advance through every half plane already crossed (a latch, so a
        # vehicle overshooting a corner does not bounce back to the old leg)
        for _ in range(len(m.waypoints)):
            prev = self._wp(m, self._idx - 1)
            cur = self._wp(m, self._idx)
            nxt = self._wp(m, self._idx + 1)
            q_im1 = _unit((cur.n - prev.n, cur.e - prev.e, cur.d - prev.d))
            q_i = _unit((nxt.n - cur.n, nxt.e - cur.e, nxt.d - cur.d))
            last_leg = not m.loop and self._idx == len(m.waypoints) - 1
            if last_leg:
                normal = q_im1
            else:
                normal = _unit_or(q_im1[0] + q_i[0], q_im1[1] + q_i[1],
                                  q_im1[2] + q_i[2], q_im1)
            crossed = ((p_n - cur.n) * normal[0] + (p_e - cur.e) * normal[1]) >= 0.0
            if not crossed:
                return PathCommand(kind="line", va_d=cur.va_d,
                                   origin=(prev.n, prev.e, prev.d), direction=q_im1)
            if not self._advance(m):
                return self._hold_orbit(m.waypoints[-1])
        # degenerate geometry (all planes crossed), hold at the active waypoint
        return self._hold_orbit(self._wp(m, self._idx))

    def _manage_fillets(self, m: Mission, p_n: float, p_e: float) -> PathCommand:
        radius = self.config.r_min
        for _ in range(2 * len(m.waypoints)):
            prev = self._wp(m, self._idx - 1)
            cur = self._wp(m, self._idx)
            nxt = self._wp(m, self._idx + 1)
            q_im1 = _unit((cur.n - prev.n, cur.e - prev.e, cur.d - prev.d))
            q_i = _unit((nxt.n - cur.n, nxt.e - cur.e, nxt.d - cur.d))
            dot = max(-1.0, min(1.0, -(q_im1[0] * q_i[0] + q_im1[1] * q_i[1]
                                       + q_im1[2] * q_i[2])))
            varrho = math.acos(dot)
            last_leg = not m.loop and self._idx == len(m.waypoints) - 1
            straight_through = last_leg or varrho > math.pi - 1e-6 or varrho < 0.1
            if self._sub != self._END_ORBIT:
                # fly the incoming line up to the fillet entry plane
                if straight_through:
                    z1 = (cur.n, cur.e, cur.d)
                else:
                    back = radius / math.tan(varrho / 2.0)
                    z1 = (cur.n - back * q_im1[0], cur.e - back * q_im1[1],
                          cur.d - back * q_im1[2])
                crossed = ((p_n - z1[0]) * q_im1[0] + (p_e - z1[1]) * q_im1[1]) >= 0.0
                if not crossed:
                    return PathCommand(kind="line", va_d=cur.va_d,
                                       origin=(prev.n, prev.e, prev.d),
                                       direction=q_im1)
                if straight_through:
                    if not self._advance(m):
                        return self._hold_orbit(m.waypoints[-1])
                    continue
                self._sub = self._END_ORBIT
            # inside the fillet arc until the exit plane
            off = radius / math.sin(varrho / 2.0)
            dirv = _unit((q_im1[0] - q_i[0], q_im1[1] - q_i[1], q_im1[2] - q_i[2]))
            center = (cur.n - off * dirv[0], cur.e - off * dirv[1], cur.d)
            lam = 1 if (q_im1[0] * q_i[1] - q_im1[1] * q_i[0]) > 0 else -1
            fwd = radius / math.tan(varrho / 2.0)
            z2 = (cur.n + fwd * q_i[0], cur.e + fwd * q_i[1], cur.d + fwd * q_i[2])
            crossed = ((p_n - z2[0]) * q_i[0] + (p_e - z2[1]) * q_i[1]) >= 0.0
            if not crossed:
                return PathCommand(kind="orbit", va_d=cur.va_d, center=center,
                                   radius=radius, turn=lam)
            self._sub = self._START_ORBIT
            if not self._advance(m):
                return self._hold_orbit(m.waypoints[-1])
        return self._hold_orbit(self._wp(m, self._idx))

    def _manage_dubins(self, m: Mission, p_n: float, p_e: float) -> PathCommand:
        for _ in range(3 * len(m.waypoints)):
            prev = self._wp(m, self._idx - 1)
            cur = self._wp(m, self._idx)
            path = compute_dubins((prev.n, prev.e, prev.d), prev.course,
                                  (cur.n, cur.e, cur.d), cur.course,
                                  self.config.r_min)
            if self._sub == self._START_ORBIT:
                # the exit plane passes through z1 along q1; arm on the
                # negative side first so a vehicle starting past the plane
                # still flies the arc
                side = (p_n - path.z1[0]) * path.q1[0] + (p_e - path.z1[1]) * path.q1[1]
                if not self._armed:
                    if side < 0.0:
                        self._armed = True
                    else:
                        return PathCommand(kind="orbit", va_d=cur.va_d,
                                           center=path.c_s, radius=path.radius,
                                           turn=path.lam_s)
                if self._armed and side >= 0.0:
                    self._sub = self._LINE
                    self._armed = False
                else:
                    return PathCommand(kind="orbit", va_d=cur.va_d,
                                       center=path.c_s, radius=path.radius,
                                       turn=path.lam_s)
            if self._sub == self._LINE:
                side = (p_n - path.z2[0]) * path.q1[0] + (p_e - path.z2[1]) * path.q1[1]
                if side < 0.0:
                    return PathCommand(kind="line", va_d=cur.va_d,
                                       origin=path.z1, direction=path.q1)
                self._sub = self._END_ORBIT
                self._armed = False
            side = (p_n - path.z3[0]) * path.q3[0] + (p_e - path.z3[1]) * path.q3[1]
            if not self._armed:
                if side < 0.0:
                    self._armed = True
                else:
                    return PathCommand(kind="orbit", va_d=cur.va_d,
                                       center=path.c_e, radius=path.radius,
                                       turn=path.lam_e)
            if self._armed and side >= 0.0:
                if not self._advance(m):
                    return self._hold_orbit(m.waypoints[-1])
                continue
            return PathCommand(kind="orbit", va_d=cur.va_d, center=path.c_e,
                               radius=path.radius, turn=path.lam_e)
        return self._hold_orbit(self._wp(m, self._idx))


def _unit(v: tuple) -> tuple:
    norm = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if norm < 1e-12:
        raise MissionError("coincident consecutive waypoints")
    return (v[0] / norm, v[1] / norm, v[2] / norm)


def _unit_or(n: float, e: float, d: float, fallback: tuple) -> tuple:
    norm = math.sqrt(n * n + e * e + d * d)
    if norm < 1e-9:
        # perfect course reversal, bisector undefined: use the incoming leg
        return fallback
    return (n / norm, e / norm, d / norm)
