"""Session report artifacts: delimited logs plus rendered figures.

Writes a directory with the canonical report JSON, three CSV logs (command
frames, perception states, events), and matplotlib renderings of the tip
trajectory, the command timeline, and task progress.
"""
from __future__ import annotations

import csv
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle, Rectangle

from .kinematics import backbone_polyline
from .session import SessionEngine, SessionReport


def write_report_artifacts(outdir, report: SessionReport,
                           engine: SessionEngine) -> list[str]:
    """Write report.json, CSV logs, and figures; returns the file paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []

    path = os.path.join(outdir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    paths.append(path)

    path = os.path.join(outdir, "frames.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seq", "t", "grow_axis", "lr_axis", "ud_axis", "grip"])
        for f in engine.frame_log:
            writer.writerow([f.seq, f.t, f.grow_axis, f.lr_axis, f.ud_axis, f.grip])
    paths.append(path)

    path = os.path.join(outdir, "states.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "tip_x", "tip_y", "tip_z", "phase", "target_block",
                         "cue_x", "cue_y", "cue_z", "grip_cue", "tower",
                         "danger_margin"])
        for rec in engine.state_log:
            cue = rec.cue.direction if rec.cue is not None else np.zeros(3)
            grip_cue = rec.cue.grip_cue if rec.cue is not None else 0.0
            writer.writerow([rec.t, *rec.scene.tip, rec.task.phase,
                             rec.task.target_block, *cue, grip_cue, rec.tower,
                             "" if math.isinf(rec.margin) else rec.margin])
    paths.append(path)

    path = os.path.join(outdir, "events.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "kind", "block", "from", "to", "landed", "tower"])
        for e in engine.events:
            writer.writerow([e["t"], e["kind"], e.get("block", ""),
                             e.get("from", ""), e.get("to", ""),
                             e.get("landed", ""), e.get("tower", "")])
    paths.append(path)

    paths.append(_trajectory_figure(outdir, engine))
    paths.append(_commands_figure(outdir, engine))
    paths.append(_progress_figure(outdir, engine))
    return paths


def _trajectory_figure(outdir, engine: SessionEngine) -> str:
    world = engine.world
    tips = np.array([rec.scene.tip for rec in engine.state_log]) \
        if engine.state_log else np.zeros((0, 3))
    backbone = backbone_polyline(world.robot, 60)

    fig, (top, side) = plt.subplots(1, 2, figsize=(10, 4.5))
    if len(tips):
        top.plot(tips[:, 0], tips[:, 1], lw=0.8, color="tab:blue",
                 label="tip path")
        side.plot(tips[:, 0], tips[:, 2], lw=0.8, color="tab:blue")
    top.plot(backbone[:, 0], backbone[:, 1], lw=2.0, color="tab:green",
             label="final backbone")
    side.plot(backbone[:, 0], backbone[:, 2], lw=2.0, color="tab:green")
    for b in world.blocks:
        h = b.half_extent
        top.add_patch(Rectangle((b.position[0] - h, b.position[1] - h),
                                2 * h, 2 * h, color="tab:orange", alpha=0.7))
        side.add_patch(Rectangle((b.position[0] - h, b.position[2] - h),
                                 2 * h, 2 * h, color="tab:orange", alpha=0.7))
    for z in world.danger_zones:
        top.add_patch(Circle((z.center[0], z.center[1]), z.radius,
                             color="tab:red", alpha=0.25))
        side.add_patch(Circle((z.center[0], z.center[2]), z.radius,
                              color="tab:red", alpha=0.25))
    top.plot(*world.tower_base, marker="x", color="k", ms=9, label="tower base")
    side.axhline(world.floor_z, color="0.4", lw=0.8)
    top.set_xlabel("x [m]")
    top.set_ylabel("y [m]")
    top.set_title("top view")
    top.axis("equal")
    top.legend(fontsize=8, loc="best")
    side.set_xlabel("x [m]")
    side.set_ylabel("z [m]")
    side.set_title("side view")
    side.axis("equal")
    fig.tight_layout()
    path = os.path.join(outdir, "trajectory.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _commands_figure(outdir, engine: SessionEngine) -> str:
    fig, ax = plt.subplots(figsize=(9, 3.5))
    if engine.frame_log:
        t = [f.t for f in engine.frame_log]
        for name, values in [("grow", [f.grow_axis for f in engine.frame_log]),
                             ("left/right", [f.lr_axis for f in engine.frame_log]),
                             ("up/down", [f.ud_axis for f in engine.frame_log]),
                             ("grip", [f.grip for f in engine.frame_log])]:
            ax.plot(t, values, lw=0.9, label=name)
    ax.set_xlabel("session time [s]")
    ax.set_ylabel("axis value")
    ax.set_ylim(-1.1, 1.1)
    ax.legend(fontsize=8, ncol=4)
    ax.set_title("command frames")
    fig.tight_layout()
    path = os.path.join(outdir, "commands.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _progress_figure(outdir, engine: SessionEngine) -> str:
    fig, ax = plt.subplots(figsize=(9, 3.5))
    if engine.state_log:
        t = [rec.t for rec in engine.state_log]
        ax.step(t, [rec.tower for rec in engine.state_log], where="post",
                color="tab:green", label="tower height")
        margins = [(rec.t, rec.margin) for rec in engine.state_log
                   if not math.isinf(rec.margin)]
        if margins:
            twin = ax.twinx()
            twin.plot([m[0] for m in margins], [m[1] for m in margins],
                      color="tab:red", lw=0.9, label="danger margin")
            twin.axhline(0.0, color="tab:red", lw=0.6, ls="--")
            twin.set_ylabel("danger margin [m]")
    ax.set_xlabel("session time [s]")
    ax.set_ylabel("tower height [blocks]")
    ax.set_title("task progress")
    ax.legend(fontsize=8, loc="upper left")
    fig.tight_layout()
    path = os.path.join(outdir, "progress.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
