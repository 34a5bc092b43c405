"""Stacking strategy and 4-DOF guidance cues from tracked scenes.

The planner orders the remaining blocks nearest-first from the tower base and
walks one block at a time through reach, grasp, transport, place. The cue
generator emits a unit direction that attracts toward the active target and
repels from danger zones with an inverse-distance potential, plus a grip
channel (+1 close, -1 open, 0 neutral).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .perception import TrackedScene

REACH = "reach"
GRASP = "grasp"
TRANSPORT = "transport"
PLACE = "place"
DONE = "done"

_GRASPED = "grasped"
_STACKED_PREFIX = "stacked@"


@dataclass(frozen=True)
class GuidanceConfig:
    """Cue shaping constants plus the scene geometry the planner needs."""

    place_radius: float = 0.03        # m, horizontal capture radius at the tower
    cue_deadzone: float = 0.01        # m, no direction inside this of the target
    influence_margin: float = 0.15    # m past a zone radius where repulsion acts
    k_rep: float = 0.02               # m, repulsion gain
    approach_clearance: float = 0.02  # m, hover above the next tower slot
    grasp_radius: float = 0.04        # m, mirror of the world's grasp radius
    grasp_offset: float = 0.02        # m, grasp point distance past the tip
    block_side: float = 0.05          # m, full cube side in the scenario
    floor_z: float = 0.0
    tower_tolerance: float = 0.03     # m, tower rooting radius


@dataclass(frozen=True)
class TaskPlan:
    sequence: tuple[int, ...]
    phase: str
    target_block: int | None
    target_point: np.ndarray | None


@dataclass(frozen=True)
class GuidanceCue:
    direction: np.ndarray     # zero or unit 3-vector
    grip_cue: float           # +1 close, -1 open, 0 neutral
    fallback: bool = False    # True when a degenerate zone forced pure attraction


def _is_stacked(state: str) -> bool:
    return state.startswith(_STACKED_PREFIX)


def observed_tower_height(scene: TrackedScene, tower_base, cfg: GuidanceConfig) -> int:
    """Tower height as visible in the scene's block states and positions."""
    children: dict[int, list[int]] = {}
    roots: list[int] = []
    for b in scene.blocks:
        if not _is_stacked(b.state):
            continue
        on = b.state[len(_STACKED_PREFIX):]
        if on == "floor":
            offset = math.hypot(b.position[0] - tower_base[0],
                                b.position[1] - tower_base[1])
            if offset < cfg.tower_tolerance:
                roots.append(b.id)
        else:
            children.setdefault(int(on), []).append(b.id)

    def depth(block_id: int) -> int:
        return 1 + max((depth(c) for c in children.get(block_id, ())), default=0)

    return max((depth(r) for r in roots), default=0)


def _placement_point(height: int, tower_base, cfg: GuidanceConfig) -> np.ndarray:
    z = cfg.floor_z + (height + 0.5) * cfg.block_side + cfg.approach_clearance
    return np.array([tower_base[0], tower_base[1], z])


def _grasp_target(block_position: np.ndarray, cfg: GuidanceConfig) -> np.ndarray:
    # the tip must hover one grasp offset above the block center
    return block_position + np.array([0.0, 0.0, cfg.grasp_offset])


def plan(scene: TrackedScene, tower_base, goal_height: int,
         prev: TaskPlan | None, cfg: GuidanceConfig = GuidanceConfig()) -> TaskPlan:
    """Advance the stacking plan one observation step.

    Unstacked blocks are targeted nearest-first from the tower base (ties by
    id). Transitions: reach -> grasp when the tip is within the grasp radius
    of the target block; grasp -> transport once the block is observed held;
    transport -> place when the tip is horizontally over the next tower slot;
    place -> reach(next) once the block is observed stacked; done when the
    observed tower reaches the goal height or no blocks remain.
    """
    height = observed_tower_height(scene, tower_base, cfg)
    if height >= goal_height:
        return TaskPlan((), DONE, None, None)
    sequence = tuple(sorted(
        (b.id for b in scene.blocks if not _is_stacked(b.state)),
        key=lambda bid: (math.hypot(scene.block(bid).position[0] - tower_base[0],
                                    scene.block(bid).position[1] - tower_base[1]),
                         bid)))
    if not sequence:
        return TaskPlan((), DONE, None, None)

    placement = _placement_point(height, tower_base, cfg)
    phase, target = REACH, sequence[0]
    if prev is not None and prev.phase != DONE and prev.target_block is not None:
        b = scene.block(prev.target_block)
        if b is not None:
            if prev.phase == REACH:
                target = prev.target_block
                phase = REACH
                if _is_stacked(b.state):
                    target = sequence[0]
                elif np.linalg.norm(scene.tip - b.position) < cfg.grasp_radius:
                    phase = GRASP
            elif prev.phase == GRASP:
                target = prev.target_block
                phase = TRANSPORT if b.state == _GRASPED else GRASP
            elif prev.phase == TRANSPORT:
                if b.state == _GRASPED:
                    target = prev.target_block
                    over_slot = math.hypot(scene.tip[0] - placement[0],
                                           scene.tip[1] - placement[1])
                    phase = PLACE if over_slot < cfg.place_radius else TRANSPORT
                elif _is_stacked(b.state):
                    phase, target = REACH, sequence[0]
                else:
                    # cargo dropped along the way: go pick it back up
                    phase, target = REACH, prev.target_block
            elif prev.phase == PLACE:
                if _is_stacked(b.state):
                    phase, target = REACH, sequence[0]
                elif b.state != _GRASPED:
                    phase, target = REACH, prev.target_block
                else:
                    phase, target = PLACE, prev.target_block

    if phase in (REACH, GRASP):
        block = scene.block(target)
        point = _grasp_target(block.position, cfg)
    else:
        point = placement
    return TaskPlan(sequence, phase, target, point)


def compute_cue(scene: TrackedScene, task: TaskPlan,
                cfg: GuidanceConfig = GuidanceConfig()) -> GuidanceCue:
    """Blend target attraction with danger-zone repulsion into a unit cue."""
    if task.phase == DONE or task.target_point is None:
        raise ValueError("no cue for a finished plan")
    tip = scene.tip
    to_target = task.target_point - tip
    dist = float(np.linalg.norm(to_target))
    attraction = to_target / dist if dist >= cfg.cue_deadzone else np.zeros(3)

    grip_cue = 0.0
    if task.phase == GRASP and task.target_block is not None:
        b = scene.block(task.target_block)
        if b is not None and np.linalg.norm(tip - b.position) < cfg.grasp_radius:
            grip_cue = 1.0
    elif task.phase == PLACE:
        if math.hypot(tip[0] - task.target_point[0],
                      tip[1] - task.target_point[1]) < cfg.place_radius:
            grip_cue = -1.0

    total = attraction.copy()
    for zone in scene.danger_zones:
        away = tip - zone.center
        d = float(np.linalg.norm(away))
        if d == 0.0:
            return GuidanceCue(attraction, grip_cue, fallback=True)
        influence = zone.radius + cfg.influence_margin
        if d < influence:
            total = total + (away / d) * cfg.k_rep * (1.0 / d - 1.0 / influence)
    norm = float(np.linalg.norm(total))
    if norm < 1e-9:
        return GuidanceCue(np.zeros(3), grip_cue)
    return GuidanceCue(total / norm, grip_cue)


def danger_margin(scene: TrackedScene) -> float:
    """Clearance to the nearest danger zone; +inf when there are none."""
    if not scene.danger_zones:
        return math.inf
    return min(float(np.linalg.norm(scene.tip - z.center)) - z.radius
               for z in scene.danger_zones)
