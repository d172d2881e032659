"""Command-line front end: run simulations, solve trims, validate aero files."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

from . import aero
from .dynamics import TrimInfeasibleError, TrimSpec, compute_trim
from .runtime import (ConfigError, LOG_DIR_ENV, default_airframe,
                      load_sim_config, run_simulation)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leanwing",
        description="Fixed-wing guidance stack and flight simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="run a simulation from a config file")
    sim.add_argument("--config", required=True, help="simulation config YAML")
    sim.add_argument("--mission", help="mission YAML, overrides the config's")
    sim.add_argument("--params", help="aero parameters YAML, overrides the config's")
    sim.add_argument("--seed", type=int, help="noise seed, overrides the config's")
    sim.add_argument("--realtime", action="store_true",
                     help="pace to the wall clock (implied by --gateway-port)")
    sim.add_argument("--gateway-port", type=int,
                     help="serve the WebSocket gateway on this port (0 picks one)")
    sim.add_argument("--log", help=f"log directory (default ${LOG_DIR_ENV} or cwd)")
    sim.add_argument("--tfinal", type=float, help="end time in seconds")

    trim = sub.add_parser("trim", help="solve a steady-flight trim point")
    trim.add_argument("--va", type=float, required=True, help="airspeed, m/s")
    trim.add_argument("--gamma", type=float, required=True,
                      help="flight-path angle, deg")
    trim.add_argument("--radius", type=float,
                      help="orbit radius, m (signed, + for clockwise); "
                           "straight flight when omitted")

    check = sub.add_parser("check-params",
                           help="validate an aero parameters file")
    check.add_argument("file", help="aero parameters YAML")
    return parser


def _cmd_sim(args: argparse.Namespace) -> int:
    try:
        config = load_sim_config(args.config, mission_path=args.mission,
                                 airframe_path=args.params)
    except (ConfigError, OSError, aero.ParamFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.tfinal is not None:
        overrides["t_final"] = args.tfinal
    if args.gateway_port is not None:
        overrides["gateway_port"] = args.gateway_port
    if overrides:
        config = dataclasses.replace(config, **overrides)
    realtime = args.realtime or config.gateway_port is not None
    sim = run_simulation(config, log_dir=args.log, realtime=realtime)
    report = sim.exit_report()
    print(json.dumps(report))
    return 0 if report["fault"] is None else 2


def _cmd_trim(args: argparse.Namespace) -> int:
    try:
        spec = TrimSpec(va=args.va, gamma=math.radians(args.gamma),
                        orbit_radius=args.radius)
        result = compute_trim(spec, default_airframe())
    except (ValueError, TrimInfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    s, d = result.state, result.surfaces
    alpha = math.atan2(s.w, s.u)
    print(f"va {args.va:.2f} m/s  gamma {args.gamma:.2f} deg  "
          + (f"radius {args.radius:.1f} m" if args.radius else "straight"))
    print(f"  alpha {math.degrees(alpha):7.3f} deg   beta {math.degrees(math.asin(s.v / args.va)):7.3f} deg")
    print(f"  phi   {math.degrees(s.phi):7.3f} deg   theta {math.degrees(s.theta):7.3f} deg")
    print(f"  u {s.u:8.4f}  v {s.v:8.4f}  w {s.w:8.4f} m/s")
    print(f"  p {s.p:8.5f}  q {s.q:8.5f}  r {s.r:8.5f} rad/s")
    print(f"  delta_e {d.delta_e:8.5f}  delta_a {d.delta_a:8.5f}  "
          f"delta_r {d.delta_r:8.5f}  delta_t {d.delta_t:7.4f}")
    print(f"  residual {result.residual_norm:.3e} in {result.iterations} iterations")
    return 0


def _cmd_check_params(args: argparse.Namespace) -> int:
    try:
        params = aero.load_params_file(args.file)
    except (aero.ParamFileError, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {args.file} (mass {params.mass:.2f} kg, "
          f"span {params.b_span:.2f} m, area {params.S_wing:.3f} m^2)")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"sim": _cmd_sim, "trim": _cmd_trim,
               "check-params": _cmd_check_params}[args.command]
    try:
        return handler(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
