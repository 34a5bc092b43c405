"""Ground-truth world: blocks, danger zones, gripper, quasi-static stacking.

Commands arrive at 10 Hz and drive growth, steering, and gripper aperture.
Grasping attaches the nearest block rigidly to a grasp point just beyond the
tip; releasing drops it straight down onto the highest support under its
center (a block face within the overlap radius, else the floor). No dynamics:
placement is settled instantly, which keeps every outcome exactly testable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Pose, quat_from_axis_angle, quat_identity, quat_rotate
from .gestures import CommandFrame
from .kinematics import (
    KinematicsConfig,
    RobotState,
    Steering,
    grow,
    retract,
    steer,
    tip_pose,
)

FREE = "free"
GRASPED = "grasped"
STACKED = "stacked"

FLOOR = None  # support marker for blocks stacked directly on the floor

_REST_TOL = 1e-6  # m, bottom-face-on-support tolerance


@dataclass(frozen=True)
class WorldConfig:
    """Grasping, release, and placement rules."""

    grow_rate: float = 0.10            # m/s at full grow axis
    aperture_rate: float = 2.0         # aperture units per second
    grasp_close_threshold: float = 0.2
    release_threshold: float = 0.8
    grasp_radius: float = 0.04         # m, how close a block must be to grab
    support_overlap: float = 0.03      # m, horizontal center offset that still supports
    tower_tolerance: float = 0.03      # m, how close to the tower base counts as rooted
    grasp_offset: float = 0.02         # m, grasp point distance past the tip


@dataclass(frozen=True)
class Block:
    """One cube. `support` is a block id, FLOOR, or unused for free/grasped."""

    id: int
    pose: Pose
    half_extent: float = 0.025
    state: str = FREE
    support: int | None = FLOOR

    def __post_init__(self):
        if self.state not in (FREE, GRASPED, STACKED):
            raise ValueError(f"unknown block state {self.state!r}")
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.pose.position

    @property
    def top_z(self) -> float:
        return float(self.pose.position[2]) + self.half_extent

    @property
    def bottom_z(self) -> float:
        return float(self.pose.position[2]) - self.half_extent

    def state_label(self) -> str:
        if self.state != STACKED:
            return self.state
        return "stacked@floor" if self.support is FLOOR else f"stacked@{self.support}"

    def at(self, position: np.ndarray, state: str | None = None,
           support: int | None = FLOOR) -> "Block":
        return Block(self.id, Pose(position, self.pose.orientation),
                     self.half_extent, self.state if state is None else state,
                     support)


@dataclass(frozen=True)
class DangerZone:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.shape != (3,) or not np.isfinite(center).all():
            raise ValueError("danger zone center must be a finite 3-vector")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("danger zone radius must be positive")
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class World:
    """Complete ground truth advanced by the session loop."""

    robot: RobotState
    blocks: tuple[Block, ...]
    danger_zones: tuple[DangerZone, ...]
    tower_base: np.ndarray
    floor_z: float
    time: float = 0.0
    grasped_id: int | None = None
    config: WorldConfig = WorldConfig()

    def __post_init__(self):
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise ValueError("block ids must be unique")
        grasped = [b.id for b in self.blocks if b.state == GRASPED]
        if len(grasped) > 1 or (grasped and grasped[0] != self.grasped_id) \
                or (not grasped and self.grasped_id is not None):
            raise ValueError("grasped block bookkeeping out of sync")
        object.__setattr__(self, "tower_base",
                           np.asarray(self.tower_base, dtype=float))

    def block(self, block_id: int) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)


def grasp_point(robot: RobotState, offset: float) -> np.ndarray:
    """Point the gripper closes on: `offset` m past the tip along its axis."""
    tip = tip_pose(robot)
    axis = quat_rotate(tip.orientation, np.array([0.0, 0.0, 1.0]))
    return tip.position + offset * axis


def _replace_block(blocks: tuple[Block, ...], new: Block) -> tuple[Block, ...]:
    return tuple(new if b.id == new.id else b for b in blocks)


def apply_command(world: World, cmd: CommandFrame, dt: float) -> World:
    """Advance the world one command step: length, steering, gripper, cargo."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    for value in (cmd.grow_axis, cmd.lr_axis, cmd.ud_axis, cmd.grip):
        if not math.isfinite(value):
            raise ValueError("command frame carries non-finite values")
    cfg = world.config
    robot = world.robot
    if cmd.grow_axis > 0:
        robot = grow(robot, cmd.grow_axis * cfg.grow_rate * dt)
    elif cmd.grow_axis < 0:
        robot = retract(robot, -cmd.grow_axis * cfg.grow_rate * dt)
    if cmd.lr_axis != 0.0 or cmd.ud_axis != 0.0:
        robot = steer(robot, cmd.lr_axis, cmd.ud_axis, dt)
    target_aperture = 1.0 - min(1.0, max(0.0, cmd.grip))
    step = cfg.aperture_rate * dt
    aperture = robot.gripper_aperture
    aperture += min(step, max(-step, target_aperture - aperture))
    robot = robot.with_gripper(aperture)

    blocks = world.blocks
    if world.grasped_id is not None:
        carried = world.block(world.grasped_id)
        blocks = _replace_block(blocks, carried.at(
            grasp_point(robot, cfg.grasp_offset), GRASPED, FLOOR))
    return replace(world, robot=robot, blocks=blocks, time=world.time + dt)


def try_grasp(world: World) -> World:
    """Attach the nearest grabbable block once the gripper has closed.

    Fires when the aperture is below the close threshold and a free or
    stacked block sits within the grasp radius of the grasp point; ties go to
    the lower id. No-op otherwise.
    """
    if world.grasped_id is not None:
        return world
    cfg = world.config
    if world.robot.gripper_aperture >= cfg.grasp_close_threshold:
        return world
    gp = grasp_point(world.robot, cfg.grasp_offset)
    best: Block | None = None
    best_key = (math.inf, math.inf)
    for b in world.blocks:
        if b.state == GRASPED:
            continue
        dist = float(np.linalg.norm(b.position - gp))
        if dist < cfg.grasp_radius and (dist, b.id) < best_key:
            best, best_key = b, (dist, b.id)
    if best is None:
        return world
    blocks = _replace_block(world.blocks, best.at(gp, GRASPED, FLOOR))
    new_world = replace(world, blocks=blocks, grasped_id=best.id)
    # anything that was resting on the taken block has lost its support
    for orphan in new_world.blocks:
        if orphan.state == STACKED and orphan.support == best.id:
            new_world = _settle(new_world, orphan.id)
    return new_world


def _settle(world: World, block_id: int) -> World:
    """Drop a block straight down onto its highest support and restate it."""
    cfg = world.config
    block = world.block(block_id)
    support: Block | None = None
    for other in world.blocks:
        if other.id == block_id or other.state == GRASPED:
            continue
        horiz = math.hypot(other.position[0] - block.position[0],
                           other.position[1] - block.position[1])
        if horiz >= cfg.support_overlap:
            continue
        if other.top_z > block.bottom_z + 1e-9:
            continue  # only surfaces below the falling block can catch it
        if support is None or other.top_z > support.top_z:
            support = other
    if support is not None:
        landing_z = support.top_z + block.half_extent
        state, on = STACKED, support.id
    else:
        landing_z = world.floor_z + block.half_extent
        near_tower = math.hypot(block.position[0] - world.tower_base[0],
                                block.position[1] - world.tower_base[1])
        if near_tower < cfg.tower_tolerance:
            state, on = STACKED, FLOOR
        else:
            state, on = FREE, FLOOR
    landed = block.at(np.array([block.position[0], block.position[1], landing_z]),
                      state, on)
    return replace(world, blocks=_replace_block(world.blocks, landed))


def release(world: World) -> World:
    """Let go of the carried block once the gripper has opened wide enough."""
    if world.grasped_id is None:
        return world
    if world.robot.gripper_aperture <= world.config.release_threshold:
        return world
    dropped_id = world.grasped_id
    block = world.block(dropped_id)
    blocks = _replace_block(world.blocks, replace(block, state=FREE, support=FLOOR))
    return _settle(replace(world, blocks=blocks, grasped_id=None), dropped_id)


def tower_height(world: World) -> int:
    """Longest stacked chain rooted on the floor at the tower base."""
    children: dict[int, list[int]] = {}
    roots: list[int] = []
    for b in world.blocks:
        if b.state != STACKED:
            continue
        if b.support is FLOOR:
            offset = math.hypot(b.position[0] - world.tower_base[0],
                                b.position[1] - world.tower_base[1])
            if offset < world.config.tower_tolerance:
                roots.append(b.id)
        else:
            children.setdefault(b.support, []).append(b.id)

    def depth(block_id: int) -> int:
        return 1 + max((depth(c) for c in children.get(block_id, ())), default=0)

    return max((depth(r) for r in roots), default=0)


# ---------------------------------------------------------------------------
# scenario files


class ScenarioError(ValueError):
    pass


_CEILING_DOWN = quat_from_axis_angle((1.0, 0.0, 0.0), math.pi)


def _pick(section: dict, allowed: dict, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}")
    merged = dict(allowed)
    merged.update(section)
    return merged


def load_scenario(source) -> World:
    """Build the initial world from a scenario dict or JSON file path.

    The same file always produces the identical world. Layout:

        {
          "robot":  {"base": [x, y, z], "max_length": ..., "kappa_max": ...,
                     "kappa_rate": ..., "window_length": ...},
          "world":  {"grow_rate": ..., "aperture_rate": ...,
                     "grasp_close_threshold": ..., "release_threshold": ...,
                     "grasp_radius": ..., "support_overlap": ...,
                     "tower_tolerance": ..., "grasp_offset": ...},
          "blocks": [{"id": 1, "center": [x, y, z], "half_extent": 0.025,
                      "state": "free" | "stacked", "support": id | "floor"}],
          "danger_zones": [{"center": [x, y, z], "radius": r}],
          "tower_base": [x, y],
          "floor_z": 0.0
        }

    The robot hangs from the ceiling: its base frame points straight down
    into the room.
    """
    if isinstance(source, dict):
        spec = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            try:
                spec = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    try:
        robot_sec = _pick(spec.get("robot", {}), {
            "base": [0.0, 0.0, 0.6], "max_length": 2.5, "kappa_max": 3.0,
            "kappa_rate": 1.0, "window_length": 0.2}, "robot")
        world_sec = _pick(spec.get("world", {}), {
            "grow_rate": 0.10, "aperture_rate": 2.0,
            "grasp_close_threshold": 0.2, "release_threshold": 0.8,
            "grasp_radius": 0.04, "support_overlap": 0.03,
            "tower_tolerance": 0.03, "grasp_offset": 0.02}, "world")
        kin_cfg = KinematicsConfig(robot_sec["max_length"], robot_sec["kappa_max"],
                                   robot_sec["kappa_rate"], robot_sec["window_length"])
        base = Pose(np.array(robot_sec["base"], dtype=float), _CEILING_DOWN)
        robot = RobotState.create(base=base, steering=Steering(), config=kin_cfg)
        blocks = []
        for entry in spec.get("blocks", []):
            entry = _pick(entry, {"id": None, "center": None, "half_extent": 0.025,
                                  "state": FREE, "support": "floor"}, "blocks[]")
            if entry["id"] is None or entry["center"] is None:
                raise ScenarioError("each block needs an id and a center")
            state = entry["state"]
            if state == GRASPED:
                raise ScenarioError("scenarios cannot start with a grasped block")
            support = entry["support"]
            support = FLOOR if support == "floor" else int(support)
            blocks.append(Block(int(entry["id"]),
                                Pose(np.array(entry["center"], dtype=float),
                                     quat_identity()),
                                float(entry["half_extent"]), state, support))
        zones = []
        for entry in spec.get("danger_zones", []):
            entry = _pick(entry, {"center": None, "radius": None}, "danger_zones[]")
            zones.append(DangerZone(np.array(entry["center"], dtype=float),
                                    float(entry["radius"])))
        tower_base = np.array(spec.get("tower_base", [0.0, 0.0]), dtype=float)
        if tower_base.shape != (2,):
            raise ScenarioError("tower_base must be [x, y]")
        unknown = set(spec) - {"robot", "world", "blocks", "danger_zones",
                               "tower_base", "floor_z"}
        if unknown:
            raise ScenarioError(f"unknown top-level key(s) {sorted(unknown)}")
        return World(robot=robot, blocks=tuple(blocks), danger_zones=tuple(zones),
                     tower_base=tower_base, floor_z=float(spec.get("floor_z", 0.0)),
                     config=WorldConfig(**{k: float(v) for k, v in world_sec.items()}))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"bad scenario value: {exc}") from exc
