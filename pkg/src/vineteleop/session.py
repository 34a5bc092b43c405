"""Deterministic multi-rate session engine and trace replay.

One engine drives both replay and live serving: hand samples stream in, and
two tick schedules fire off the sample clock — command ticks that close a
decimation window and step the world, and perception ticks that snapshot the
scene, advance the plan, and produce guidance. Tick times are exact rationals
of the configured rates, ties run perception before command, and every output
is a pure function of (config, scenario, calibration, samples), so replaying
recorded input reproduces a live session bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources

import numpy as np

from .gestures import (
    CommandFrame,
    GestureCalibration,
    GestureConfig,
    HandSample,
    WindowDecimator,
    read_trace,
)
from .guidance import DONE, GuidanceConfig, GuidanceCue, TaskPlan, compute_cue, danger_margin, plan
from .kinematics import backbone_polyline, tip_pose
from .perception import NoiseConfig, PerceptionSimulator, TrackedScene
from .world import World, apply_command, load_scenario, release, tower_height, try_grasp

DEFAULT_SCENARIO = "default_scenario.json"
TOWER3_TRACE = "tower3.jsonl"


def bundled_path(name: str):
    """Filesystem path of a bundled data file (scenario or trace)."""
    return resources.files("vineteleop").joinpath("data").joinpath(name)


@dataclass
class SessionConfig:
    """Everything a session needs besides the scenario contents."""

    input_rate: float = 270.0        # Hz, nominal hand-sample rate
    command_rate: float = 10.0       # Hz, robot command rate
    perception_rate: float = 30.0    # Hz, tracking / guidance rate
    physics_step: float | None = None  # s, defaults to 1 / command_rate
    scenario: str | None = None      # path; None = bundled default
    goal_height: int = 3
    mode: str = "live"               # "live" or "replay"
    host: str = "127.0.0.1"
    port: int = 8765
    backbone_samples: int = 40       # polyline resolution in state updates
    seed: int = 0                    # convenience alias for noise.seed
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gestures: GestureConfig = field(default_factory=GestureConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)

    def __post_init__(self):
        for rate in (self.input_rate, self.command_rate, self.perception_rate):
            if not (math.isfinite(rate) and rate > 0):
                raise ValueError("all rates must be positive")
        if self.mode not in ("live", "replay"):
            raise ValueError("mode must be 'live' or 'replay'")
        if self.physics_step is None:
            self.physics_step = 1.0 / self.command_rate
        elif abs(self.physics_step - 1.0 / self.command_rate) > 1e-12:
            raise ValueError("physics_step is tied to command_rate "
                             f"(expected {1.0 / self.command_rate})")
        if self.mode == "replay":
            ratio = self.input_rate / self.command_rate
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("command_rate must divide input_rate evenly "
                                 "in replay mode")
        if self.seed and self.noise.seed != self.seed:
            self.noise = replace(self.noise, seed=self.seed)
        if self.backbone_samples < 2:
            raise ValueError("backbone_samples must be at least 2")

    def scenario_source(self):
        return self.scenario if self.scenario is not None else bundled_path(DEFAULT_SCENARIO)


@dataclass(frozen=True)
class StateRecord:
    """One perception-tick outcome, kept for state updates and reports."""

    t: float                  # session time of the tick (s since first sample)
    scene: TrackedScene
    task: TaskPlan
    cue: GuidanceCue | None   # None once the plan is done
    tower: int
    margin: float


@dataclass(frozen=True)
class SessionReport:
    """End-of-session summary; serializes byte-identically for equal inputs."""

    duration: float
    frames_sent: int
    final_height: int
    success: bool
    min_danger_margin: float | None
    events: tuple[dict, ...]

    def to_json(self) -> str:
        payload = {
            "duration": self.duration,
            "frames_sent": self.frames_sent,
            "final_height": self.final_height,
            "success": self.success,
            "min_danger_margin": self.min_danger_margin,
            "events": list(self.events),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def phase_log(self) -> list[dict]:
        return [e for e in self.events if e["kind"] == "phase"]


def _guidance_for_world(base: GuidanceConfig, world: World) -> GuidanceConfig:
    """Inject scenario geometry into the guidance constants."""
    block_side = 2.0 * world.blocks[0].half_extent if world.blocks else base.block_side
    return replace(base,
                   grasp_radius=world.config.grasp_radius,
                   grasp_offset=world.config.grasp_offset,
                   tower_tolerance=world.config.tower_tolerance,
                   floor_z=world.floor_z,
                   block_side=block_side)


class SessionEngine:
    """Interleaves decimation, world stepping, and perception on one clock."""

    def __init__(self, cfg: SessionConfig, world: World, cal: GestureCalibration):
        self.cfg = cfg
        self.world = world
        self.guidance_cfg = _guidance_for_world(cfg.guidance, world)
        self.cmd_period = 1 / Fraction(cfg.command_rate)
        self.perc_period = 1 / Fraction(cfg.perception_rate)
        self.decimator = WindowDecimator(cal, cfg.gestures, self.cmd_period)
        self.perception = PerceptionSimulator(cfg.noise, float(self.perc_period))
        self.task: TaskPlan | None = None
        self.frames_sent = 0
        self.samples_seen = 0
        self.last_frame: CommandFrame | None = None
        self.state_log: list[StateRecord] = []
        self.frame_log: list[CommandFrame] = []
        self.events: list[dict] = []
        self.min_margin = math.inf
        self.goal_reached = False
        self.finished = False
        self._t0: float | None = None
        self._next_cmd = 1   # index of the next command tick (time k * cmd_period)
        self._next_perc = 1

    # -- tick machinery ----------------------------------------------------

    def _cmd_time(self) -> float:
        return float(self._next_cmd * self.cmd_period)

    def _perc_time(self) -> float:
        return float(self._next_perc * self.perc_period)

    def _advance(self, until: float) -> None:
        """Run every tick with time <= until; perception wins ties."""
        while True:
            tc, tp = self._cmd_time(), self._perc_time()
            if tp <= until and tp <= tc:
                self._perception_tick(tp)
            elif tc <= until:
                self._command_tick(tc)
            else:
                return

    def _perception_tick(self, t: float) -> None:
        scene = self.perception.snapshot(self.world)
        prev_phase = self.task.phase if self.task is not None else None
        prev_block = self.task.target_block if self.task is not None else None
        self.task = plan(scene, self.world.tower_base, self.cfg.goal_height,
                         self.task, self.guidance_cfg)
        if self.task.phase != prev_phase or self.task.target_block != prev_block:
            self.events.append({"kind": "phase", "t": t,
                                "from": prev_phase, "to": self.task.phase,
                                "block": self.task.target_block})
        cue = None
        if self.task.phase != DONE:
            cue = compute_cue(scene, self.task, self.guidance_cfg)
        elif not self.goal_reached:
            self.goal_reached = True
            self.events.append({"kind": "goal", "t": t,
                                "tower": tower_height(self.world)})
        margin = danger_margin(scene)
        self.min_margin = min(self.min_margin, margin)
        self.state_log.append(StateRecord(t, scene, self.task, cue,
                                          tower_height(self.world), margin))
        self._next_perc += 1

    def _command_tick(self, t: float) -> None:
        frame = self.decimator.close_window()
        self.last_frame = frame
        self.frame_log.append(frame)
        before = self.world.grasped_id
        world = apply_command(self.world, frame, self.cfg.physics_step)
        world = try_grasp(world) if world.grasped_id is None else release(world)
        if world.grasped_id is not None and before is None:
            self.events.append({"kind": "grasp", "t": t,
                                "block": world.grasped_id})
        elif world.grasped_id is None and before is not None:
            self.events.append({"kind": "release", "t": t, "block": before,
                                "landed": world.block(before).state_label()})
        self.world = world
        self.frames_sent += 1
        self._next_cmd += 1

    # -- public API ----------------------------------------------------------

    def ingest(self, sample: HandSample) -> None:
        """Feed one hand sample; fires any ticks its timestamp has passed."""
        if self.finished:
            raise RuntimeError("session already finalized")
        if self._t0 is None:
            self._t0 = sample.t
        self._advance(sample.t - self._t0)
        self.decimator.push(sample)
        self.samples_seen += 1

    def advance_to(self, session_time: float) -> None:
        """Fire ticks due at or before a session-relative time, sample or not.

        Ingesting a later sample is equivalent; this just lets a caller bring
        the world current at a window boundary before deciding its input.
        """
        if self.finished:
            raise RuntimeError("session already finalized")
        if self._t0 is not None:
            self._advance(session_time)

    def finalize(self) -> SessionReport:
        """Close the open command window, run trailing ticks, and report."""
        if self.finished:
            raise RuntimeError("session already finalized")
        self.finished = True
        if self._t0 is None:
            return SessionReport(0.0, 0, tower_height(self.world), False,
                                 self._margin_value(), tuple(self.events))
        end = (self.decimator.window_index + 1) * self.cmd_period
        self._advance(float(end))
        final_height = tower_height(self.world)
        return SessionReport(
            duration=float(end),
            frames_sent=self.frames_sent,
            final_height=final_height,
            success=final_height >= self.cfg.goal_height,
            min_danger_margin=self._margin_value(),
            events=tuple(self.events),
        )

    def _margin_value(self) -> float | None:
        return None if math.isinf(self.min_margin) else self.min_margin

    def snapshot_report(self) -> SessionReport:
        """Session summary so far, without closing the session."""
        height = tower_height(self.world)
        return SessionReport(
            duration=float(self.frames_sent * self.cmd_period),
            frames_sent=self.frames_sent,
            final_height=height,
            success=height >= self.cfg.goal_height,
            min_danger_margin=self._margin_value(),
            events=tuple(self.events),
        )

    def session_time(self) -> float:
        """Sample time processed so far, relative to the first sample."""
        if self._t0 is None or self.decimator._last_t is None:
            return 0.0
        return self.decimator._last_t - self._t0

    def latest_state(self) -> dict | None:
        """Wire-format state update for the most recent perception tick."""
        if not self.state_log:
            return None
        rec = self.state_log[-1]
        backbone = backbone_polyline(self.world.robot, self.cfg.backbone_samples)
        cue_dir = rec.cue.direction if rec.cue is not None else np.zeros(3)
        grip_cue = rec.cue.grip_cue if rec.cue is not None else 0.0
        cmd = self.last_frame
        return {
            "type": "state",
            "v": 1,
            "t": rec.t,
            "backbone": [[float(x), float(y), float(z)] for x, y, z in backbone],
            "blocks": [{"id": b.id,
                        "p": [float(v) for v in b.position],
                        "state": b.state}
                       for b in rec.scene.blocks],
            "cue": {"dir": [float(v) for v in cue_dir], "grip": float(grip_cue)},
            "phase": rec.task.phase,
            "tower": rec.tower,
            "danger_margin": None if math.isinf(rec.margin) else rec.margin,
            "cmd": ({"grow": cmd.grow_axis, "lr": cmd.lr_axis,
                     "ud": cmd.ud_axis, "grip": cmd.grip}
                    if cmd is not None
                    else {"grow": 0.0, "lr": 0.0, "ud": 0.0, "grip": 0.0}),
        }

    def idle_state(self) -> dict:
        """State update for a session with no perception ticks yet."""
        return initial_state_message(self.world, self.cfg.backbone_samples)


def initial_state_message(world: World, backbone_samples: int) -> dict:
    """Wire-format state for a world no commands have touched yet."""
    backbone = backbone_polyline(world.robot, backbone_samples)
    return {
        "type": "state", "v": 1, "t": 0.0,
        "backbone": [[float(x), float(y), float(z)] for x, y, z in backbone],
        "blocks": [{"id": b.id, "p": [float(v) for v in b.position],
                    "state": b.state_label()} for b in world.blocks],
        "cue": {"dir": [0.0, 0.0, 0.0], "grip": 0.0},
        "phase": "idle", "tower": tower_height(world),
        "danger_margin": None, "cmd": {"grow": 0.0, "lr": 0.0,
                                       "ud": 0.0, "grip": 0.0},
    }


def run_session(cfg: SessionConfig, cal: GestureCalibration,
                samples, world: World | None = None) -> tuple[SessionReport, SessionEngine]:
    """Run a full deterministic session over in-memory samples."""
    if world is None:
        world = load_scenario(cfg.scenario_source())
    engine = SessionEngine(cfg, world, cal)
    for sample in samples:
        engine.ingest(sample)
    return engine.finalize(), engine


def run_replay(cfg: SessionConfig, trace_path) -> SessionReport:
    """Replay a recorded trace file; byte-identical report for equal inputs."""
    report, _ = run_replay_detailed(cfg, trace_path)
    return report


def run_replay_detailed(cfg: SessionConfig, trace_path) -> tuple[SessionReport, SessionEngine]:
    cfg = replace(cfg, mode="replay")
    cal, samples = read_trace(trace_path)
    return run_session(cfg, cal, samples)
