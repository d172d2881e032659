"""Simulation runtime: configuration, deterministic scheduling, logging.

One control tick is drain commands -> sample sensors -> estimate -> manage ->
follow -> control -> integrate dynamics substeps, all driven by an integer
tick counter so a fixed seed reproduces a run bit for bit. Telemetry goes to
a CSV file (one row per control tick, carrying the full active path geometry
so modules can be replayed offline against recorded traffic) and every
externally injected command lands in a JSON-lines log with the tick where it
took effect.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import queue
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import aero, dynamics, ekf, sensors
from .bus import Bus, PARAM_EVENTS_TOPIC, ParamEvent
from .controller import (Autopilot, AutopilotCommand, ControlFeedback,
                         ControllerConfig)
from .follower import FollowerConfig, FollowerOutput, PathCommand, follow
from .frames import GeodeticCoord, StateVector, WindVector, compute_air_data, wrap_angle
from .manager import (ManagerConfig, Mission, PathManager, mission_from_doc,
                      mission_to_doc, waypoint_from_doc)

LOG_DIR_ENV = "LEANWING_LOG_DIR"

TELEMETRY_COLUMNS = (
    "t",
    "pn", "pe", "pd", "u", "v", "w", "phi", "theta", "psi", "p", "q", "r",
    "va", "chi",
    "est_pn", "est_pe", "est_pd", "est_u", "est_v", "est_w",
    "est_phi", "est_theta", "est_psi", "est_bp", "est_bq", "est_br",
    "est_chi", "est_vg",
    "fb_p", "fb_q", "fb_va", "fb_h",
    "cmd_va", "cmd_h", "cmd_chi", "cmd_phi_ff",
    "delta_a", "delta_e", "delta_r", "delta_t",
    "phase", "wp_index",
    "path_kind", "path_on", "path_oe", "path_od", "path_dn", "path_de",
    "path_dd", "path_cn", "path_ce", "path_cd", "path_radius", "path_turn",
    "path_va",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved run configuration (all nested files already loaded)."""

    airframe: aero.AircraftParams
    dt_dynamics: float = 0.002
    control_substeps: int = 5
    t_final: float = 120.0
    seed: int = 0
    launch_va: float = 25.0
    launch_altitude: float = 0.0
    launch_course: float = 0.0
    origin: GeodeticCoord | None = None
    wind_steady: tuple = (0.0, 0.0, 0.0)
    wind_gust_sigma: tuple = (0.0, 0.0, 0.0)
    va_filter_tau: float = 0.2
    sensors: sensors.SensorConfig = field(default_factory=sensors.SensorConfig)
    estimator: ekf.EkfConfig | None = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    follower: FollowerConfig = field(default_factory=FollowerConfig)
    manager: ManagerConfig = field(default_factory=ManagerConfig)
    mission: Mission | None = None
    trim_throttle: bool = True    # derive the throttle trim point at launch
    gateway_port: int | None = None
    gateway_rate_hz: float = 20.0

    def __post_init__(self) -> None:
        if not 0 < self.dt_dynamics <= dynamics.DT_DYNAMICS_MAX:
            raise ConfigError("dt_dynamics outside the integrator's range")
        if self.control_substeps < 1:
            raise ConfigError("control_substeps must be >= 1")
        if self.t_final <= 0:
            raise ConfigError("t_final must be positive")
        if self.launch_va <= 0:
            raise ConfigError("launch_va must be positive")
        if self.launch_altitude < 0:
            raise ConfigError("launch_altitude cannot be below ground")
        if self.va_filter_tau <= 0:
            raise ConfigError("va_filter_tau must be positive")

    @property
    def dt_control(self) -> float:
        return self.dt_dynamics * self.control_substeps


def default_airframe() -> aero.AircraftParams:
    path = resources.files("leanwing") / "configs" / "airframe.yaml"
    return aero.load_params(path.read_bytes())


def default_sim_config() -> SimConfig:
    path = resources.files("leanwing") / "configs" / "sim.yaml"
    return load_sim_config_data(yaml.safe_load(path.read_bytes()))


_DEG_SUFFIX = "_deg"


def _build_dataclass(cls, mapping: dict, section: str, **extra):
    """Instantiate a config dataclass from a YAML section, rejecting unknowns.

    Keys ending in _deg are converted to radians for the matching field.
    """
    if not isinstance(mapping, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = dict(extra)
    for key, value in mapping.items():
        name = key
        if key.endswith(_DEG_SUFFIX) and key[: -len(_DEG_SUFFIX)] in names:
            name = key[: -len(_DEG_SUFFIX)]
            value = math.radians(float(value))
        if name not in names:
            raise ConfigError(f"unknown key '{key}' in section '{section}'")
        if name in kwargs and name not in extra:
            raise ConfigError(f"duplicate key '{key}' in section '{section}'")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{section}': {exc}") from exc


def load_sim_config(path, mission_path=None, airframe_path=None) -> SimConfig:
    base = Path(path).parent
    with open(path, "rb") as fh:
        doc = yaml.safe_load(fh.read())
    return load_sim_config_data(doc, base_dir=base, mission_path=mission_path,
                                airframe_path=airframe_path)


def load_sim_config_data(doc: Any, base_dir: Path | None = None,
                         mission_path=None, airframe_path=None) -> SimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("sim config must be a YAML mapping")
    known = {"dt_dynamics", "control_substeps", "t_final", "seed", "launch",
             "origin", "wind", "va_filter_tau", "airframe", "sensors",
             "estimator", "controller", "follower", "manager", "mission",
             "gateway"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown sim config keys {sorted(unknown)}")

    if airframe_path is None:
        airframe_path = doc.get("airframe")
        if airframe_path is not None and base_dir is not None:
            airframe_path = base_dir / airframe_path
    if airframe_path is None:
        airframe = default_airframe()
    else:
        airframe = aero.load_params_file(airframe_path)

    launch = doc.get("launch", {})
    if not isinstance(launch, dict) or set(launch) - {"va", "altitude", "course_deg"}:
        raise ConfigError("launch accepts va, altitude, course_deg")

    origin = None
    if "origin" in doc:
        o = doc["origin"]
        if not isinstance(o, dict) or set(o) != {"lat", "lon", "alt"}:
            raise ConfigError("origin needs lat, lon, alt")
        origin = GeodeticCoord(float(o["lat"]), float(o["lon"]), float(o["alt"]))

    wind = doc.get("wind", {})
    if not isinstance(wind, dict) or set(wind) - {"steady", "gust_sigma"}:
        raise ConfigError("wind accepts steady, gust_sigma")

    sensor_cfg = _build_dataclass(sensors.SensorConfig, doc.get("sensors", {}),
                                  "sensors")
    controller_doc = dict(doc.get("controller", {}))
    trim_throttle = "delta_t_trim" not in controller_doc
    controller_cfg = _build_dataclass(ControllerConfig, controller_doc, "controller")
    follower_cfg = _build_dataclass(FollowerConfig, doc.get("follower", {}),
                                    "follower")
    manager_cfg = _build_dataclass(ManagerConfig, doc.get("manager", {}), "manager")

    dt_dynamics = float(doc.get("dt_dynamics", 0.002))
    substeps = int(doc.get("control_substeps", 5))
    dt_control = dt_dynamics * substeps
    estimator_cfg = _build_dataclass(
        ekf.EkfConfig, doc.get("estimator", {}), "estimator",
        dt=dt_control, imu_dt=1.0 / sensor_cfg.imu_rate_hz,
        rho_air=airframe.rho_air)

    gateway = doc.get("gateway", {})
    if not isinstance(gateway, dict) or set(gateway) - {"port", "rate_hz"}:
        raise ConfigError("gateway accepts port, rate_hz")

    mission = None
    if mission_path is None:
        mission_path = doc.get("mission")
        if mission_path is not None and base_dir is not None:
            mission_path = base_dir / mission_path
    if mission_path is not None:
        with open(mission_path, "rb") as fh:
            mission = mission_from_doc(
                yaml.safe_load(fh.read()), origin=origin,
                min_altitude=controller_cfg.h_takeoff)

    return SimConfig(
        airframe=airframe,
        dt_dynamics=dt_dynamics,
        control_substeps=substeps,
        t_final=float(doc.get("t_final", 120.0)),
        seed=int(doc.get("seed", 0)),
        launch_va=float(launch.get("va", 25.0)),
        launch_altitude=float(launch.get("altitude", 0.0)),
        launch_course=math.radians(float(launch.get("course_deg", 0.0))),
        origin=origin,
        wind_steady=tuple(wind.get("steady", (0.0, 0.0, 0.0))),
        wind_gust_sigma=tuple(wind.get("gust_sigma", (0.0, 0.0, 0.0))),
        va_filter_tau=float(doc.get("va_filter_tau", 0.2)),
        sensors=sensor_cfg,
        estimator=estimator_cfg,
        controller=controller_cfg,
        follower=follower_cfg,
        manager=manager_cfg,
        mission=mission,
        trim_throttle=trim_throttle,
        gateway_port=gateway.get("port"),
        gateway_rate_hz=float(gateway.get("rate_hz", 20.0)),
    )


# parameters exposed for live tuning: key -> (attribute path, min, max)
_TUNABLE = {
    "controller.chi_kp": (0.0, 20.0),
    "controller.chi_ki": (0.0, 10.0),
    "controller.roll_kp": (0.0, 10.0),
    "controller.roll_kd": (0.0, 5.0),
    "controller.alt_kp": (0.0, 1.0),
    "controller.alt_ki": (0.0, 1.0),
    "controller.pitch_kp": (-20.0, 0.0),
    "controller.pitch_kd": (-5.0, 0.0),
    "controller.va_kp": (0.0, 2.0),
    "controller.va_ki": (0.0, 2.0),
    "follower.k_path": (1e-4, 1.0),
    "follower.k_orbit": (0.1, 20.0),
    "follower.chi_inf": (0.1, math.pi / 2.0),
}


def _period_ticks(rate_hz: float, dt: float, what: str) -> int:
    period = 1.0 / (rate_hz * dt)
    ticks = round(period)
    if ticks < 1 or abs(period - ticks) > 1e-6:
        raise ConfigError(
            f"{what} rate {rate_hz} Hz does not divide the control rate")
    return ticks


class Simulation:
    """Owns every module and advances them on a shared deterministic clock."""

    def __init__(self, config: SimConfig, log_dir=None):
        self.config = config
        params = config.airframe

        trim = dynamics.compute_trim(
            dynamics.TrimSpec(va=config.launch_va, gamma=0.0), params)
        controller_cfg = config.controller
        if config.trim_throttle:
            controller_cfg = dataclasses.replace(
                controller_cfg, delta_t_trim=trim.surfaces.delta_t)

        st = trim.state
        self.state = StateVector(
            0.0, 0.0, -config.launch_altitude, st.u, st.v, st.w,
            st.phi, st.theta, wrap_angle(config.launch_course),
            st.p, st.q, st.r)
        self.surfaces = trim.surfaces

        self.wind_model = dynamics.WindModel(
            steady=WindVector(*config.wind_steady),
            gust_sigma=config.wind_gust_sigma,
            seed=int(np_seed_for(config.seed, "wind")))
        self.wind = self.wind_model.steady

        self.sensor_suite = sensors.SensorSuite(
            config.sensors, rho_air=params.rho_air,
            seed=int(np_seed_for(config.seed, "sensors")))
        self.estimator = ekf.Ekf(config.estimator or ekf.EkfConfig(
            dt=config.dt_control, imu_dt=1.0 / config.sensors.imu_rate_hz,
            rho_air=params.rho_air))
        self.autopilot = Autopilot(controller_cfg)
        self.follower_config = config.follower
        self.path_manager = PathManager(config.manager)
        if config.mission is not None:
            self.path_manager.set_mission(config.mission)

        self.bus = Bus()
        self._wire_bus()

        dt = config.dt_control
        self._imu_every = _period_ticks(config.sensors.imu_rate_hz, dt, "imu")
        self._gnss_every = _period_ticks(config.sensors.gnss_rate_hz, dt, "gnss")
        self._press_every = _period_ticks(config.sensors.pressure_rate_hz, dt,
                                          "pressure")
        self._mag_every = _period_ticks(config.sensors.mag_rate_hz, dt, "mag")

        self.tick = 0
        self.paused = False
        self.fault: str | None = None
        self.records: list[dict] = []
        self._record_listeners: list[Callable[[int, dict], None]] = []
        self._last_imu: sensors.ImuMeasurement | None = None
        self._va_filt = config.launch_va
        self._follower_prev: FollowerOutput | None = None
        self._overrides: dict[str, float] = {}
        self._inbox: queue.Queue = queue.Queue()

        if log_dir is None:
            log_dir = os.environ.get(LOG_DIR_ENV, ".")
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.telemetry_path = self.log_dir / "telemetry.csv"
        self.command_log_path = self.log_dir / "commands.jsonl"
        self._telemetry_fh = open(self.telemetry_path, "w", encoding="utf-8")
        self._telemetry_fh.write(",".join(TELEMETRY_COLUMNS) + "\n")
        self._command_fh = open(self.command_log_path, "w", encoding="utf-8")

    # -- bus wiring -------------------------------------------------------

    def _wire_bus(self) -> None:
        bus = self.bus
        bus.topic("truth", StateVector).claim("dynamics")
        bus.topic("imu", sensors.ImuMeasurement).claim("sensors")
        bus.topic("gnss", sensors.GnssMeasurement).claim("sensors")
        bus.topic("pressure", sensors.PressureMeasurement).claim("sensors")
        bus.topic("mag", sensors.MagMeasurement).claim("sensors")
        bus.topic("estimate", ekf.EstimatedState).claim("estimator")
        bus.topic("path", PathCommand).claim("manager")
        bus.topic("setpoints", AutopilotCommand).claim("follower")
        bus.topic("surfaces", aero.ControlSurfaces).claim("controller")

        bus.register_service("mission/load", self._svc_mission_load)
        bus.register_service("mission/add", self._svc_mission_add)
        bus.register_service("mission/clear", self._svc_mission_clear)

        for key, (lo, hi) in _TUNABLE.items():
            section, name = key.split(".", 1)
            source = self.autopilot.config if section == "controller" \
                else self.follower_config
            bus.declare_param(key, getattr(source, name), lo, hi)
        bus.topic(PARAM_EVENTS_TOPIC).subscribe(self._on_param_event)

    def _svc_mission_load(self, request) -> dict:
        mission = mission_from_doc(
            request, origin=self.config.origin,
            min_altitude=self.autopilot.config.h_takeoff)
        self.path_manager.set_mission(mission)
        return mission_to_doc(mission)

    def _svc_mission_add(self, request) -> dict:
        wp = waypoint_from_doc(request, origin=self.config.origin)
        if -wp.d <= self.autopilot.config.h_takeoff:
            raise ValueError("waypoint altitude is not above the takeoff altitude")
        self.path_manager.add_waypoint(wp)
        return mission_to_doc(self.path_manager.mission)

    def _svc_mission_clear(self, request) -> dict:
        self.path_manager.clear_mission()
        return mission_to_doc(self.path_manager.mission)

    def _on_param_event(self, ev: ParamEvent) -> None:
        section, name = ev.key.split(".", 1)
        if section == "controller":
            ap = self.autopilot
            target = {
                "chi_kp": (ap._course, "kp"), "chi_ki": (ap._course, "ki"),
                "alt_kp": (ap._alt, "kp"), "alt_ki": (ap._alt, "ki"),
                "va_kp": (ap._va, "kp"), "va_ki": (ap._va, "ki"),
            }.get(name)
            ap.config = dataclasses.replace(ap.config, **{name: ev.value})
            if target is not None:
                setattr(target[0], target[1], ev.value)
        else:
            self.follower_config = dataclasses.replace(
                self.follower_config, **{name: ev.value})

    # -- external commands --------------------------------------------------

    def submit(self, command: dict, reply_to: Callable[[dict], None] | None = None) -> None:
        """Thread-safe: queue a command for the next tick boundary."""
        self._inbox.put((command, reply_to))

    def add_record_listener(self, fn: Callable[[int, dict], None]) -> None:
        """Called on the sim thread with (tick, record) after every control tick."""
        self._record_listeners.append(fn)

    def remove_record_listener(self, fn: Callable[[int, dict], None]) -> None:
        if fn in self._record_listeners:
            self._record_listeners.remove(fn)

    def _drain_inbox(self) -> None:
        while True:
            try:
                command, reply_to = self._inbox.get_nowait()
            except queue.Empty:
                break
            reply = self._execute_command(command)
            self._command_fh.write(json.dumps(
                {"tick": self.tick, "t": self.t, "command": command,
                 "ok": reply.get("ok", True)}) + "\n")
            if reply_to is not None:
                reply_to(reply)
        self.bus.drain_services()
        self.bus.apply_staged_params()

    def _execute_command(self, command: dict) -> dict:
        try:
            kind = command["type"]
            if kind == "set_param":
                self.bus.set_param(command["key"], command["value"])
                return {"ok": True}
            if kind == "get_params":
                return {"ok": True, "params": self.bus.param_items()}
            if kind == "load_mission":
                return self._mission_service("mission/load", command["mission"])
            if kind == "add_waypoint":
                return self._mission_service("mission/add", command["waypoint"])
            if kind == "clear_mission":
                return self._mission_service("mission/clear", None)
            if kind == "get_mission":
                return {"ok": True,
                        "mission": mission_to_doc(self.path_manager.mission)}
            if kind == "override_command":
                return self._set_override(command)
            if kind == "pause":
                self.paused = True
                return {"ok": True}
            if kind == "resume":
                self.paused = False
                return {"ok": True}
            return {"ok": False, "error": f"unknown command type {kind!r}"}
        except KeyError as exc:
            return {"ok": False, "error": f"missing field {exc}"}
        except Exception as exc:
            return {"ok": False, "error": str(exc)}

    def _mission_service(self, name: str, request) -> dict:
        out: dict = {}
        self.bus.call_service(name, request, out.update)
        self.bus.drain_services()
        if not out.get("ok", False):
            return out
        return {"ok": True, "mission": out["value"]}

    def _set_override(self, command: dict) -> dict:
        kind = command.get("kind")
        value = command.get("value")
        if kind not in ("chi_c", "h_c", "va_c"):
            return {"ok": False, "error": f"unknown override kind {kind!r}"}
        if value is None:
            self._overrides.pop(kind, None)
            return {"ok": True}
        value = float(value)
        if not math.isfinite(value):
            return {"ok": False, "error": "override value must be finite"}
        if kind == "va_c" and value <= 0:
            return {"ok": False, "error": "va_c override must be positive"}
        self._overrides[kind] = value
        return {"ok": True}

    # -- stepping -----------------------------------------------------------

    @property
    def t(self) -> float:
        return self.tick * self.config.dt_control

    def step(self) -> None:
        """One control tick; raises SimFault if the model diverges."""
        if self.fault is not None:
            raise dynamics.SimFault(self.fault)
        cfg = self.config
        try:
            self._drain_inbox()
            self._sample_sensors()
            self._run_estimator()
            est = self.estimator.state if self.estimator.initialized else None
            path, cmd = self._guidance(est)
            surfaces = self._control(cmd, est)
            for _ in range(cfg.control_substeps):
                self.wind = self.wind_model.sample()
                self.state = dynamics.rk4_step(
                    self.state, surfaces, self.wind, cfg.airframe, cfg.dt_dynamics)
            self.bus.topic("truth").publish(self.state, "dynamics")
            self._record(est, path, cmd, surfaces)
            self.tick += 1
        except dynamics.SimFault as exc:
            self.fault = str(exc)
            self.flush()
            raise

    def _sample_sensors(self) -> None:
        bus, suite, state = self.bus, self.sensor_suite, self.state
        if self.tick % self._imu_every == 0:
            fm = aero.forces_and_moments(state, self.surfaces, self.wind,
                                         self.config.airframe)
            m = self.config.airframe.mass
            imu = suite.sample_imu(state, (fm.fx / m, fm.fy / m, fm.fz / m))
            self._last_imu = imu
            bus.topic("imu").publish(imu, "sensors")
        if self.tick % self._gnss_every == 0:
            bus.topic("gnss").publish(suite.sample_gnss(state), "sensors")
        if self.tick % self._press_every == 0:
            bus.topic("pressure").publish(
                suite.sample_pressure(state, self.wind), "sensors")
        if self.tick % self._mag_every == 0:
            bus.topic("mag").publish(suite.sample_mag(state), "sensors")

    def _run_estimator(self) -> None:
        est = self.estimator
        bus = self.bus
        gnss = bus.topic("gnss").latest
        press = bus.topic("pressure").latest
        mag = bus.topic("mag").latest
        decl = self.config.sensors.mag_declination
        rho = self.config.airframe.rho_air
        if not est.initialized:
            if gnss is None or press is None or mag is None:
                return
            est.initialize(
                gnss.p_n, gnss.p_e, gnss.p_d,
                wrap_angle(mag.heading - decl),
                sensors.pressure_to_airspeed(press.diff_pa, rho),
                v_ned=(gnss.v_n, gnss.v_e, gnss.v_d))
            bus.topic("estimate").publish(est.state, "estimator")
            return
        if self._last_imu is not None:
            est.propagate(self._last_imu.gyro, self._last_imu.accel)
        if self.tick % self._gnss_every == 0 and gnss is not None:
            est.update("gnss_pos", (gnss.p_n, gnss.p_e))
            est.update("gnss_vel", (gnss.v_n, gnss.v_e, gnss.v_d))
        if self.tick % self._press_every == 0 and press is not None:
            est.update("baro_alt",
                       sensors.pressure_to_altitude(press.static_pa, rho))
            est.update("airspeed", press.diff_pa)
        if self.tick % self._mag_every == 0 and mag is not None:
            est.update("mag_heading", wrap_angle(mag.heading - decl))
        bus.topic("estimate").publish(est.state, "estimator")

    def _guidance(self, est) -> tuple[PathCommand, AutopilotCommand]:
        if est is None:
            pn, pe, pd, chi = self.state.p_n, self.state.p_e, self.state.p_d, \
                self.state.psi
        else:
            pn, pe, pd, chi = est.p_n, est.p_e, est.p_d, est.chi
        path = self.path_manager.update(pn, pe, pd)
        self.bus.topic("path").publish(path, "manager")
        out = follow(path, pn, pe, pd, chi, self.follower_config,
                     prev=self._follower_prev)
        self._follower_prev = out
        cmd = AutopilotCommand(va_c=path.va_d, h_c=out.h_c, chi_c=out.chi_c,
                               phi_ff=out.phi_ff)
        if self._overrides:
            ov = self._overrides
            cmd = AutopilotCommand(
                va_c=ov.get("va_c", cmd.va_c),
                h_c=ov.get("h_c", cmd.h_c),
                chi_c=wrap_angle(ov["chi_c"]) if "chi_c" in ov else cmd.chi_c,
                phi_ff=0.0 if "chi_c" in ov else cmd.phi_ff)
        self.bus.topic("setpoints").publish(cmd, "follower")
        return path, cmd

    def _control(self, cmd: AutopilotCommand, est) -> aero.ControlSurfaces:
        press = self.bus.topic("pressure").latest
        if press is not None:
            va_raw = sensors.pressure_to_airspeed(press.diff_pa,
                                                  self.config.airframe.rho_air)
            dt = self.config.dt_control
            alpha = dt / (self.config.va_filter_tau + dt)
            self._va_filt += alpha * (va_raw - self._va_filt)
        if est is None or self._last_imu is None:
            # estimator not up yet: hold the launch surfaces
            self.bus.topic("surfaces").publish(self.surfaces, "controller")
            return self.surfaces
        fb = ControlFeedback(
            phi=est.phi, theta=est.theta, chi=est.chi, h=est.altitude,
            va=self._va_filt,
            p=self._last_imu.gyro[0] - est.b_p,
            q=self._last_imu.gyro[1] - est.b_q)
        surfaces = self.autopilot.update(cmd, fb)
        self.surfaces = surfaces
        self.bus.topic("surfaces").publish(surfaces, "controller")
        return surfaces

    def _record(self, est, path: PathCommand, cmd: AutopilotCommand,
                surfaces: aero.ControlSurfaces) -> None:
        s = self.state
        air = compute_air_data(s, self.wind)
        if est is None:
            ev = [math.nan] * 14
        else:
            ev = [est.p_n, est.p_e, est.p_d, est.u, est.v, est.w,
                  est.phi, est.theta, est.psi, est.b_p, est.b_q, est.b_r,
                  est.chi, est.v_g]
        imu = self._last_imu
        fb_p = imu.gyro[0] - ev[9] if imu is not None and est is not None else math.nan
        fb_q = imu.gyro[1] - ev[10] if imu is not None and est is not None else math.nan
        if path.kind == "line":
            geom = [*path.origin, *path.direction, 0.0, 0.0, 0.0, 0.0, 0]
        else:
            geom = [0.0] * 6 + [*path.center, path.radius, path.turn]
        row = [
            self.t,
            s.p_n, s.p_e, s.p_d, s.u, s.v, s.w, s.phi, s.theta, s.psi,
            s.p, s.q, s.r, air.va, air.chi,
            *ev,
            fb_p, fb_q, self._va_filt, -ev[2] if est is not None else math.nan,
            cmd.va_c, cmd.h_c, cmd.chi_c, cmd.phi_ff,
            surfaces.delta_a, surfaces.delta_e, surfaces.delta_r, surfaces.delta_t,
            self.autopilot.phase.value, self.path_manager.waypoint_index,
            path.kind, *geom, path.va_d,
        ]
        record = dict(zip(TELEMETRY_COLUMNS, row))
        self.records.append(record)
        for fn in self._record_listeners:
            fn(self.tick, record)
        self._telemetry_fh.write(",".join(
            v if isinstance(v, str) else repr(float(v)) if isinstance(v, float)
            else repr(v) for v in row) + "\n")

    def run(self, t_final: float | None = None, realtime: bool = False,
            on_tick: Callable[["Simulation"], None] | None = None) -> None:
        """Advance to t_final (config default), honoring pause in realtime mode."""
        if t_final is None:
            t_final = self.config.t_final
        wall_start = time.monotonic() - self.t
        while self.t < t_final - 1e-12:
            if self.paused:
                if not realtime:
                    break
                self._drain_inbox()
                time.sleep(0.02)
                wall_start = time.monotonic() - self.t
                continue
            self.step()
            if on_tick is not None:
                on_tick(self)
            if realtime:
                lag = self.t - (time.monotonic() - wall_start)
                if lag > 0:
                    time.sleep(lag)
        self.flush()

    def flush(self) -> None:
        if not self._telemetry_fh.closed:
            self._telemetry_fh.flush()
        if not self._command_fh.closed:
            self._command_fh.flush()

    def close(self) -> None:
        self.flush()
        self._telemetry_fh.close()
        self._command_fh.close()

    def exit_report(self) -> dict:
        return {"t": self.t, "fault": self.fault,
                "log": str(self.telemetry_path)}


def np_seed_for(seed: int, stream: str) -> int:
    """Derive a stable per-subsystem seed from the run seed.

    Uses an FNV-1a hash of the stream name (the builtin hash is salted per
    process, which would break reproducibility).
    """
    h = 2166136261
    for ch in stream.encode():
        h = ((h ^ ch) * 16777619) % (1 << 32)
    return int(np.random.SeedSequence([seed, h]).generate_state(1)[0])


def read_telemetry(path) -> list[dict]:
    """Parse a telemetry CSV back into per-tick dicts with float fields."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            row: dict[str, Any] = {}
            for key, value in zip(header, parts):
                if key in ("phase", "path_kind"):
                    row[key] = value
                elif key in ("wp_index", "path_turn"):
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            rows.append(row)
    return rows


def run_simulation(config: SimConfig, log_dir=None, t_final: float | None = None,
                   realtime: bool = False) -> Simulation:
    """Build, run to completion, and close a simulation; returns it for inspection.

    Opens the WebSocket gateway for the duration of the run when the config
    names a port. A model fault ends the run but is reported as data, on
    ``sim.fault`` and in ``sim.exit_report()``, rather than raised; callers
    who want the exception drive ``Simulation.run`` themselves.
    """
    sim = Simulation(config, log_dir=log_dir)
    gateway = None
    if config.gateway_port is not None:
        from .gateway import Gateway
        gateway = Gateway(sim, config.gateway_port,
                          rate_hz=config.gateway_rate_hz)
        gateway.start()
    try:
        sim.run(t_final=t_final, realtime=realtime)
    except dynamics.SimFault:
        pass
    finally:
        if gateway is not None:
            gateway.stop()
        sim.close()
    return sim
