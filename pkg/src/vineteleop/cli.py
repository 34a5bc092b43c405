"""Command-line entry points: serve, replay, verify."""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .config import ConfigError, add_config_arguments, build_session_config
from .gestures import GestureCalibration, HandSample, TraceError, decimate, read_trace
from .server import SessionServer
from .session import TOWER3_TRACE, bundled_path, run_replay_detailed
from .world import ScenarioError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vineteleop",
        description="Teleoperation sandbox for a ceiling-mounted growing "
                    "robot: live operator sessions, deterministic replays, "
                    "and trace tooling.")
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run a live operator session server")
    serve_p.add_argument("--config", help="JSON config file")
    serve_p.add_argument("--record", metavar="PATH",
                         help="record ingested samples to a replayable trace")
    add_config_arguments(serve_p)

    replay_p = sub.add_parser("replay", help="replay a recorded trace headlessly")
    replay_p.add_argument("trace", nargs="?", default=None,
                          help="trace file (default: the bundled tower3 trace)")
    replay_p.add_argument("--config", help="JSON config file")
    replay_p.add_argument("--report-dir", metavar="DIR",
                          help="write report.json, CSV logs, and figures here")
    add_config_arguments(replay_p)

    verify_p = sub.add_parser(
        "verify", help="check a trace's command stream is capture-frame independent")
    verify_p.add_argument("trace", help="trace file to verify")
    verify_p.add_argument("--checks", type=int, default=25,
                          help="number of random frame transforms (default 25)")
    verify_p.add_argument("--rng-seed", type=int, default=0)
    add_config_arguments(verify_p)
    return parser


def cmd_serve(args) -> int:
    cfg = build_session_config("live", args.config, args)
    try:
        server = SessionServer(cfg, args.record)
    except OSError as exc:
        print(f"error: cannot bind {cfg.host}:{cfg.port}: {exc}", file=sys.stderr)
        return 1
    print(f"session server listening on ws://{cfg.host}:{server.port}")
    if args.record:
        print(f"recording to {args.record}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    report = server.shutdown()
    if report is not None:
        print(report.to_json())
    return 0


def cmd_replay(args) -> int:
    cfg = build_session_config("replay", args.config, args)
    trace = args.trace if args.trace is not None else bundled_path(TOWER3_TRACE)
    try:
        report, engine = run_replay_detailed(cfg, trace)
    except (TraceError, ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    margin = ("n/a" if report.min_danger_margin is None
              else f"{report.min_danger_margin:.3f} m")
    print(f"duration:        {report.duration:.1f} s")
    print(f"command frames:  {report.frames_sent}")
    print(f"tower height:    {report.final_height}")
    print(f"success:         {str(report.success).lower()}")
    print(f"min margin:      {margin}")
    print(f"events:          {len(report.events)}")
    if args.report_dir:
        from .report import write_report_artifacts
        for path in write_report_artifacts(args.report_dir, report, engine):
            print(f"wrote {path}")
    else:
        print(report.to_json())
    return 0


def _transform(samples, cal, angle, translation):
    c, s = math.cos(angle), math.sin(angle)

    def rot3(p):
        return np.array([c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])

    moved = [HandSample(smp.t, rot3(smp.position) + translation, smp.grip)
             for smp in samples]
    fwd = cal.forward
    moved_cal = GestureCalibration(rot3(cal.neutral) + translation,
                                   np.array([c * fwd[0] - s * fwd[1],
                                             s * fwd[0] + c * fwd[1]]))
    return moved, moved_cal


def frames_fingerprint(frames) -> bytes:
    return json.dumps([[f.seq, f.t, f.grow_axis, f.lr_axis, f.ud_axis, f.grip]
                       for f in frames]).encode()


def cmd_verify(args) -> int:
    cfg = build_session_config("replay", None, args)
    try:
        cal, samples = read_trace(args.trace)
    except (TraceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    reference = frames_fingerprint(decimate(samples, cal, cfg.gestures))
    rng = np.random.default_rng(args.rng_seed)
    failures = 0
    for i in range(args.checks):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        translation = np.append(rng.uniform(-5.0, 5.0, 2), rng.uniform(-1.0, 1.0))
        moved, moved_cal = _transform(samples, cal, angle, translation)
        candidate = frames_fingerprint(decimate(moved, moved_cal, cfg.gestures))
        ok = candidate == reference
        failures += 0 if ok else 1
        print(f"check {i + 1:3d}: rotation {angle:6.3f} rad, "
              f"translation ({translation[0]:+.2f}, {translation[1]:+.2f}, "
              f"{translation[2]:+.2f}) m ... {'ok' if ok else 'MISMATCH'}")
    if failures:
        print(f"FAIL: {failures} of {args.checks} transforms changed the "
              f"command stream", file=sys.stderr)
        return 1
    print(f"PASS: command stream invariant under {args.checks} "
          f"capture-frame transforms")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "replay":
            return cmd_replay(args)
        return cmd_verify(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
