"""Command line front end: scenario runs, analysis, planning, calibration,
and the teleop service.

Exit codes: 0 success, 2 usage error (argparse), 3 run faulted, 4 unknown
scenario, 5 configuration error, 6 file I/O error, 7 unreachable plan
target.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    calibrate_runout,
    calibrate_stiffness_ratio,
    run_summary,
    split_s_curve,
)
from .model import RobotConfig
from .phantom import create_phantom, project, write_pgm
from .planner import PlanRequest, UnreachableTargetError, plan_s_shape
from .simulator import run_scenario, scenario_by_name

EXIT_FAULT = 3
EXIT_UNKNOWN_SCENARIO = 4
EXIT_CONFIG = 5
EXIT_IO = 6
EXIT_UNREACHABLE = 7


def _load_config_arg(path: str | None) -> RobotConfig:
    from .service import resolve_config

    return resolve_config(path)


def default_phantom(voxel_size: float = 0.5):
    """Block that contains every built-in scenario's tunnel.

    The entry face sits at the sheath mouth (x = 0) so material contact
    happens at the first carving step.
    """
    return create_phantom(size=(100.0, 80.0, 60.0), voxel_size=voxel_size,
                          origin=(0.0, -40.0, -30.0))


def _cmd_run(args) -> int:
    try:
        config = _load_config_arg(args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        script = scenario_by_name(args.scenario, config)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_UNKNOWN_SCENARIO

    phantom = None if args.no_phantom else default_phantom(args.voxel_size)
    record = run_scenario(script, config, phantom=phantom, dt=args.dt)

    if args.out is not None:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            record.to_timeline_csv(out / "timeline.csv")
            record.to_locus_csv(out / "tip_locus.csv")
            record.events_to_json(out / "events.json")
            with open(out / "metrics.json", "w", encoding="utf-8") as fh:
                json.dump(run_summary(record), fh, indent=2)
                fh.write("\n")
            if phantom is not None:
                write_pgm(project(phantom, "z"), out / "projection_top.pgm")
                write_pgm(project(phantom, "y"), out / "projection_side.pgm")
                phantom.save_snapshot(str(out / "phantom"))
        except OSError as exc:
            print(f"cannot write outputs: {exc}", file=sys.stderr)
            return EXIT_IO

    summary = run_summary(record)
    print(f"scenario {record.scenario}: t={record.duration:.3f}s "
          f"carved={record.carved_voxels} faulted={record.faulted} "
          f"flagged={record.flagged}")
    if summary["plane_angle_deg"] is not None:
        print(f"bend plane angle: {summary['plane_angle_deg']:.2f} deg")
    if record.faulted:
        for ev in record.events:
            if ev.kind == "fault":
                print(f"fault: {ev.detail.get('fault')}", file=sys.stderr)
        return EXIT_FAULT
    return 0


def _cmd_analyze(args) -> int:
    try:
        data = np.loadtxt(args.locus, delimiter=",", skiprows=1)
    except OSError as exc:
        print(f"cannot read locus: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"locus is not a t,x,y,z CSV: {exc}", file=sys.stderr)
        return EXIT_IO
    if data.ndim != 2 or data.shape[1] < 4:
        print("locus is not a t,x,y,z CSV", file=sys.stderr)
        return EXIT_IO
    points = data[:, 1:4]

    split = split_s_curve(points)
    out = {
        "kind": split.kind,
        "split_arc_length": split.split_arc_length,
        "plane_angle_deg": split.plane_angle_deg,
        "first": {
            "arc_length": split.first_arc_length,
            "radius": None if split.first_fit.is_straight else split.first_fit.radius,
            "rmse": split.first_fit.rmse,
        },
        "second": {
            "arc_length": split.second_arc_length,
            "radius": None if split.second_fit.is_straight else split.second_fit.radius,
            "rmse": split.second_fit.rmse,
        },
    }
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        print(f"split kind: {out['kind']} at s={out['split_arc_length']:.2f} mm, "
              f"plane angle {out['plane_angle_deg']:.2f} deg")
        for label in ("first", "second"):
            seg = out[label]
            radius = "straight" if seg["radius"] is None else f"R={seg['radius']:.2f} mm"
            print(f"  {label}: length {seg['arc_length']:.2f} mm, {radius}, "
                  f"rmse {seg['rmse']:.4f} mm")
    return 0


def _cmd_plan(args) -> int:
    try:
        config = _load_config_arg(args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rolls = None
    if args.rolls != "free":
        try:
            rolls = tuple(float(r) for r in args.rolls.split(","))
        except ValueError:
            print(f"bad --rolls value: {args.rolls!r}", file=sys.stderr)
            return 2
    request = PlanRequest(
        target=np.array(args.target),
        total_length=args.total_length,
        allowed_relative_rolls=rolls,
    )
    try:
        result = plan_s_shape(request, config)
    except UnreachableTargetError as exc:
        print(f"unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE

    if args.json:
        print(result.to_json())
    else:
        b = result.best
        print(f"tip error {result.tip_error:.3f} mm, cost {result.cost:.4f}")
        print(f"  outer translation {b.outer_translation:.3f} mm")
        print(f"  inner translation {b.inner_translation:.3f} mm")
        print(f"  outer roll {b.outer_roll:.2f} deg, relative roll "
              f"{b.relative_roll:.2f} deg")
        if b.precurvature_radius is not None:
            print(f"  precurvature radius {b.precurvature_radius:.2f} mm")
    if args.out is not None:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(result.to_json())
                fh.write("\n")
        except OSError as exc:
            print(f"cannot write plan: {exc}", file=sys.stderr)
            return EXIT_IO
    return 0


def _cmd_calibrate(args) -> int:
    try:
        if args.quantity == "stiffness":
            value = calibrate_stiffness_ratio(args.observed, args.precurvature)
            print(f"{value:.6g}")
        else:
            value = calibrate_runout(args.observed, args.bit)
            print(f"{value:.6g}")
    except ValueError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def _cmd_serve(args) -> int:
    try:
        config = _load_config_arg(args.config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .service import serve

    factory = None if args.no_phantom else (lambda: default_phantom(args.voxel_size))
    serve(host=args.host, port=args.port, config=config, phantom_factory=factory)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctsdr",
        description="Concentric-tube steerable drill simulator and planner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a built-in scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--config", default=None, help="robot config JSON")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--dt", type=float, default=0.01)
    p_run.add_argument("--voxel-size", type=float, default=0.5)
    p_run.add_argument("--no-phantom", action="store_true",
                       help="kinematics only, skip carving")
    p_run.set_defaults(func=_cmd_run)

    p_an = sub.add_parser("analyze", help="split and fit a recorded tip locus")
    p_an.add_argument("--locus", required=True, help="tip locus CSV (t,x,y,z)")
    p_an.add_argument("--json", action="store_true")
    p_an.set_defaults(func=_cmd_analyze)

    p_plan = sub.add_parser("plan", help="solve joints for a target tip")
    p_plan.add_argument("--target", type=float, nargs=3, required=True,
                        metavar=("X", "Y", "Z"))
    p_plan.add_argument("--total-length", type=float, default=90.0)
    p_plan.add_argument("--rolls", default="0,90,180",
                        help="comma-separated relative rolls in deg, or 'free'")
    p_plan.add_argument("--config", default=None)
    p_plan.add_argument("--out", default=None, help="write the plan JSON here")
    p_plan.add_argument("--json", action="store_true")
    p_plan.set_defaults(func=_cmd_plan)

    p_cal = sub.add_parser("calibrate", help="fit model parameters to a measurement")
    cal_sub = p_cal.add_subparsers(dest="quantity", required=True)
    p_stiff = cal_sub.add_parser("stiffness",
                                 help="stiffness ratio from an opposed-pair radius")
    p_stiff.add_argument("--observed", type=float, required=True,
                         help="observed combined radius, mm")
    p_stiff.add_argument("--precurvature", type=float, required=True,
                         help="tube precurvature radius, mm")
    p_stiff.set_defaults(func=_cmd_calibrate)
    p_run_out = cal_sub.add_parser("runout",
                                   help="effective runout from a tunnel diameter")
    p_run_out.add_argument("--observed", type=float, required=True,
                           help="measured tunnel diameter, mm")
    p_run_out.add_argument("--bit", type=float, required=True,
                           help="bit diameter, mm")
    p_run_out.set_defaults(func=_cmd_calibrate)

    p_serve = sub.add_parser("serve", help="run the teleop WebSocket service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--config", default=None)
    p_serve.add_argument("--voxel-size", type=float, default=0.5)
    p_serve.add_argument("--no-phantom", action="store_true")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
