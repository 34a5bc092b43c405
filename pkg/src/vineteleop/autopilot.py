"""Scripted operator: synthesizes hand-sample traces that finish the task.

Runs a session engine in lockstep, looks at the ground-truth world once per
command window, and emits the 27 constant samples that decode to the axes a
competent operator would command. Because everted material keeps the
curvature it grew with, the script sets the steering to the single-arc
solution through the target while the robot is short, then grows with it
held: the deployed backbone is then a clean arc, and only deviation from
that planned arc is fed back. The result is an ordinary trace file whose
replay deterministically builds the tower.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gestures import GestureCalibration, HandSample, displacement_for_axes
from .guidance import DONE
from .kinematics import tip_pose
from .session import SessionConfig, SessionEngine
from .world import World, grasp_point, load_scenario

SCRIPT_CALIBRATION = GestureCalibration(np.array([0.0, 0.0, 1.0]),
                                        np.array([1.0, 0.0]))

_ASCEND = "ascend"
_SHAPE = "shape"
_DESCEND = "descend"
_CLOSE = "close"
_OPEN = "open"
_SETTLE = "settle"


@dataclass
class ScriptLimits:
    max_windows: int = 1500       # hard stop: 150 s of scripted input
    settle_windows: int = 10      # neutral tail after the goal
    short_length: float = 0.16    # m, arc length at which reshaping is clean
    kappa_cap: float = 2.7        # 1/m, stay below the hardware clamp
    shape_tol: float = 0.02       # 1/m, curvature error that ends shaping
    grasp_trigger: float = 0.012  # m, closeness that triggers closing
    place_xy: float = 0.008       # m, alignment that allows release
    place_z: float = 0.012        # m, height error that allows release
    deviation_gain: float = 4.0   # 1/m of curvature per m of path deviation
    deviation_cap: float = 0.15   # 1/m, bound on the deviation correction


def _clamp(v: float, lo: float = -1.0, hi: float = 1.0) -> float:
    return max(lo, min(hi, v))


@dataclass(frozen=True)
class ArcPlan:
    """Single constant-curvature arc from the base through a grasp-point goal."""

    kappa_lr: float
    kappa_ud: float
    kappa: float
    alpha: float  # world bend direction (rad): +x is 0, +y is pi/2

    def planned_xy(self, base: np.ndarray, depth: float) -> np.ndarray:
        """Lateral position the arc should have at the given depth below base."""
        if self.kappa < 1e-9:
            return base[:2].copy()
        u = math.asin(_clamp(self.kappa * depth, -1.0, 1.0))
        radial = (1.0 - math.cos(u)) / self.kappa
        return base[:2] + radial * np.array([math.cos(self.alpha),
                                             math.sin(self.alpha)])


def plan_arc(base: np.ndarray, gp_target: np.ndarray, offset: float,
             cap: float) -> ArcPlan:
    """Arc whose grasp point (offset past the tip along its tangent) lands on
    `gp_target`; solved by fixed-point iteration on the tip tangent."""
    tip_goal = gp_target - np.array([0.0, 0.0, offset])
    kappa = alpha = theta = 0.0
    for _ in range(6):
        dx, dy = tip_goal[0] - base[0], tip_goal[1] - base[1]
        depth = base[2] - tip_goal[2]
        lateral = math.hypot(dx, dy)
        if lateral < 1e-9 or depth <= 0:
            kappa, theta = 0.0, 0.0
            tangent = np.array([0.0, 0.0, -1.0])
        else:
            theta = 2.0 * math.atan2(lateral, depth)
            kappa = min(math.sin(theta) / depth, cap)
            alpha = math.atan2(dy, dx)
            tangent = np.array([math.sin(theta) * math.cos(alpha),
                                math.sin(theta) * math.sin(alpha),
                                -math.cos(theta)])
        tip_goal = gp_target - offset * tangent
    return ArcPlan(kappa * math.cos(alpha), -kappa * math.sin(alpha),
                   kappa, alpha)


class ScriptedOperator:
    """Window-by-window controller emitting axes from ground-truth state."""

    def __init__(self, world: World, cfg: SessionConfig,
                 limits: ScriptLimits = ScriptLimits()):
        self.limits = limits
        self.offset = world.config.grasp_offset
        self.kappa_rate = world.robot.config.kappa_rate
        self.dt = cfg.physics_step
        self.state = _ASCEND
        self.arc: ArcPlan | None = None

    def _steer_toward(self, robot, k_lr: float, k_ud: float) -> tuple[float, float]:
        scale = self.kappa_rate * self.dt
        return (_clamp((k_lr - robot.steering.kappa_lr) / scale),
                _clamp((k_ud - robot.steering.kappa_ud) / scale))

    def _gp_goal(self, engine: SessionEngine) -> np.ndarray | None:
        """Where the grasp point should end up for the active plan step."""
        task = engine.task
        if task is None or task.phase == DONE or task.target_point is None:
            return None
        if task.phase in ("reach", "grasp"):
            return engine.world.block(task.target_block).position.copy()
        return task.target_point.copy()

    def _descend_axes(self, engine: SessionEngine, goal: np.ndarray,
                      grip: float) -> tuple[float, float, float, float]:
        world = engine.world
        robot = world.robot
        lim = self.limits
        gp = grasp_point(robot, self.offset)
        tip = tip_pose(robot).position
        planned = self.arc.planned_xy(robot.base.position,
                                      robot.base.position[2] - tip[2])
        dev = planned - tip[:2]
        k_lr = self.arc.kappa_lr + _clamp(lim.deviation_gain * dev[0],
                                          -lim.deviation_cap, lim.deviation_cap)
        k_ud = self.arc.kappa_ud + _clamp(-lim.deviation_gain * dev[1],
                                          -lim.deviation_cap, lim.deviation_cap)
        lr, ud = self._steer_toward(robot, k_lr, k_ud)
        grow_axis = _clamp((gp[2] - goal[2]) / 0.03)
        return grow_axis, lr, ud, grip

    def window_axes(self, engine: SessionEngine) -> tuple[float, float, float, float]:
        world = engine.world
        lim = self.limits
        goal = self._gp_goal(engine)
        if goal is None:
            self.state = _SETTLE
            return 0.0, 0.0, 0.0, 0.0
        carrying = world.grasped_id is not None
        grip = 1.0 if carrying else 0.0
        robot = world.robot
        gp = grasp_point(robot, self.offset)

        if self.state == _SETTLE:
            self.state = _ASCEND  # a new target appeared after the last drop

        if self.state == _ASCEND:
            if robot.total_length > lim.short_length:
                return -1.0, 0.0, 0.0, grip
            self.state = _SHAPE

        if self.state == _SHAPE:
            self.arc = plan_arc(robot.base.position, goal, self.offset,
                                lim.kappa_cap)
            err = math.hypot(self.arc.kappa_lr - robot.steering.kappa_lr,
                             self.arc.kappa_ud - robot.steering.kappa_ud)
            if err > lim.shape_tol:
                lr, ud = self._steer_toward(robot, self.arc.kappa_lr,
                                            self.arc.kappa_ud)
                return 0.0, lr, ud, grip
            self.state = _DESCEND

        if self.state == _DESCEND:
            if carrying:
                xy_err = math.hypot(goal[0] - gp[0], goal[1] - gp[1])
                if xy_err < lim.place_xy and abs(gp[2] - goal[2]) < lim.place_z:
                    self.state = _OPEN
                else:
                    return self._descend_axes(engine, goal, 1.0)
            elif float(np.linalg.norm(goal - gp)) < lim.grasp_trigger:
                self.state = _CLOSE
            else:
                return self._descend_axes(engine, goal, 0.0)

        if self.state == _CLOSE:
            if not carrying:
                return self._descend_axes(engine, goal, 1.0)
            self.state = _ASCEND
            return -1.0, 0.0, 0.0, 1.0

        if self.state == _OPEN:
            if carrying:
                return _clamp((gp[2] - goal[2]) / 0.03), 0.0, 0.0, 0.0
            self.state = _ASCEND
            return -1.0, 0.0, 0.0, 0.0

        return 0.0, 0.0, 0.0, grip


def build_script_trace(scenario_source, cfg: SessionConfig | None = None,
                       limits: ScriptLimits = ScriptLimits(),
                       require_success: bool = True,
                       ) -> tuple[GestureCalibration, list[HandSample]]:
    """Drive a fresh session to completion and return the emitted samples."""
    cfg = cfg if cfg is not None else SessionConfig(mode="replay")
    world = load_scenario(scenario_source)
    engine = SessionEngine(cfg, world, SCRIPT_CALIBRATION)
    operator = ScriptedOperator(world, cfg, limits)
    per_window = int(round(cfg.input_rate / cfg.command_rate))
    rate = cfg.input_rate
    samples: list[HandSample] = []
    done_windows = 0
    for k in range(limits.max_windows):
        engine.advance_to(float(k * engine.cmd_period))
        axes = operator.window_axes(engine)
        position = displacement_for_axes(axes[0], axes[1], axes[2],
                                         SCRIPT_CALIBRATION, cfg.gestures)
        for i in range(per_window):
            sample = HandSample((k * per_window + i) / rate, position, axes[3])
            engine.ingest(sample)
            samples.append(sample)
        if engine.task is not None and engine.task.phase == DONE:
            done_windows += 1
            if done_windows >= limits.settle_windows:
                break
    report = engine.finalize()
    if require_success and not report.success:
        raise RuntimeError(
            f"scripted operator failed: height {report.final_height}, "
            f"{report.frames_sent} frames, events {report.events[-6:]}")
    return SCRIPT_CALIBRATION, samples
