"""World simulation tests: command application, grasping, stacking, towers."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vineteleop.geometry import Pose, quat_identity, quat_rotate, quat_to_matrix
from vineteleop.gestures import CommandFrame
from vineteleop.kinematics import grow, tip_pose
from vineteleop.world import (
    FLOOR,
    FREE,
    GRASPED,
    STACKED,
    Block,
    DangerZone,
    ScenarioError,
    World,
    apply_command,
    grasp_point,
    load_scenario,
    release,
    tower_height,
    try_grasp,
)


def frame(grow_axis=0.0, lr=0.0, ud=0.0, grip=0.0, seq=0, t=0.0):
    return CommandFrame(seq, t, grow_axis, lr, ud, grip)


def block_at(bid, x, y, z, state=FREE, support=FLOOR, half=0.025):
    return Block(bid, Pose(np.array([x, y, z]), quat_identity()), half, state, support)


def make_world(blocks=(), zones=(), tower=(0.0, -0.15), grown=0.0, aperture=1.0):
    world = load_scenario({
        "robot": {"base": [0.0, 0.0, 0.6]},
        "tower_base": list(tower),
        "floor_z": 0.0,
    })
    robot = world.robot
    if grown > 0:
        robot = grow(robot, grown)
    robot = robot.with_gripper(aperture)
    return World(robot=robot, blocks=tuple(blocks), danger_zones=tuple(zones),
                 tower_base=np.array(tower), floor_z=0.0, config=world.config)


# ---------------------------------------------------------------------------
# apply_command


def test_zero_frame_only_advances_time():
    world = make_world(blocks=[block_at(1, 0.1, 0.0, 0.025)])
    after = apply_command(world, frame(), 0.1)
    assert after.time == pytest.approx(0.1)
    assert after.robot.total_length == world.robot.total_length
    assert after.robot.gripper_aperture == world.robot.gripper_aperture
    assert after.blocks == world.blocks


def test_grow_rate_arithmetic():
    world = make_world()
    after = apply_command(world, frame(grow_axis=1.0), 0.1)
    assert math.isclose(after.robot.total_length, 0.01, abs_tol=1e-15)


def test_retract_on_negative_grow_axis():
    world = make_world(grown=0.5)
    after = apply_command(world, frame(grow_axis=-0.5), 0.1)
    assert math.isclose(after.robot.total_length, 0.495, abs_tol=1e-12)


def test_gripper_slews_toward_command():
    world = make_world(aperture=1.0)
    after = apply_command(world, frame(grip=1.0), 0.1)
    assert after.robot.gripper_aperture == pytest.approx(0.8)
    for _ in range(10):
        after = apply_command(after, frame(grip=1.0), 0.1)
    assert after.robot.gripper_aperture == pytest.approx(0.0)


def test_grasped_block_follows_tip():
    world = make_world(blocks=[block_at(1, 0.0, 0.0, 0.045)], grown=0.533,
                       aperture=0.1)
    world = try_grasp(world)
    assert world.grasped_id == 1
    tip_before = tip_pose(world.robot).position.copy()
    block_before = world.block(1).position.copy()
    after = apply_command(world, frame(grow_axis=1.0, grip=1.0), 0.1)
    tip_delta = tip_pose(after.robot).position - tip_before
    block_delta = after.block(1).position - block_before
    assert_allclose(block_delta, tip_delta, atol=1e-12)


def test_rejects_non_finite_command():
    world = make_world()
    with pytest.raises(ValueError):
        apply_command(world, frame(grow_axis=float("nan")), 0.1)
    with pytest.raises(ValueError):
        apply_command(world, frame(), 0.0)


# ---------------------------------------------------------------------------
# try_grasp


def grasp_setup(block_offset, aperture=0.1, bid=1):
    """Robot grown straight down so the grasp point sits at z = 0.03."""
    world = make_world(grown=0.55, aperture=aperture)
    gp = grasp_point(world.robot, world.config.grasp_offset)
    center = gp + block_offset
    return World(robot=world.robot,
                 blocks=(block_at(bid, *center),),
                 danger_zones=(), tower_base=world.tower_base,
                 floor_z=0.0, config=world.config)


def test_grasps_block_within_radius():
    world = try_grasp(grasp_setup(np.array([0.03, 0.0, 0.0])))
    assert world.grasped_id == 1
    assert world.block(1).state == GRASPED
    gp = grasp_point(world.robot, world.config.grasp_offset)
    assert_allclose(world.block(1).position, gp, atol=1e-12)


def test_no_grasp_outside_radius():
    world = try_grasp(grasp_setup(np.array([0.05, 0.0, 0.0])))
    assert world.grasped_id is None


def test_no_grasp_with_open_gripper():
    world = try_grasp(grasp_setup(np.array([0.01, 0.0, 0.0]), aperture=0.5))
    assert world.grasped_id is None


def test_grasp_tie_breaks_by_lower_id():
    base = grasp_setup(np.array([0.03, 0.0, 0.0]), bid=7)
    gp = grasp_point(base.robot, base.config.grasp_offset)
    other = block_at(3, *(gp + np.array([-0.03, 0.0, 0.0])))
    world = try_grasp(World(robot=base.robot, blocks=(base.blocks[0], other),
                            danger_zones=(), tower_base=base.tower_base,
                            floor_z=0.0, config=base.config))
    assert world.grasped_id == 3


def test_grasping_a_support_resettles_its_rider():
    base = grasp_setup(np.array([0.0, 0.0, 0.0]))
    target = base.blocks[0]
    rider = block_at(2, target.position[0], target.position[1],
                     target.top_z + 0.025, state=STACKED, support=1)
    world = try_grasp(World(robot=base.robot, blocks=(target, rider),
                            danger_zones=(), tower_base=base.tower_base,
                            floor_z=0.0, config=base.config))
    assert world.grasped_id == 1
    assert world.block(2).state in (FREE, STACKED)
    assert world.block(2).bottom_z == pytest.approx(0.0, abs=1e-6)


# ---------------------------------------------------------------------------
# release


def carried_world(xy, z, tower=(0.0, -0.15), extra=()):
    """A block rigidly held at (xy, z) with the gripper wide open."""
    world = make_world(tower=tower, grown=0.3, aperture=0.9)
    carried = block_at(1, *xy, z, state=GRASPED)
    return World(robot=world.robot, blocks=(carried,) + tuple(extra),
                 danger_zones=(), tower_base=world.tower_base, floor_z=0.0,
                 grasped_id=1, config=world.config)


def test_release_on_empty_floor_far_from_tower_is_free():
    world = release(carried_world((1.0, 1.0), 0.2))
    assert world.grasped_id is None
    b = world.block(1)
    assert b.state == FREE
    assert b.bottom_z == pytest.approx(0.0, abs=1e-9)


def test_release_onto_block_stacks_with_face_contact():
    support = block_at(2, 0.0, 0.0, 0.025)
    world = release(carried_world((0.01, 0.0), 0.15, extra=[support]))
    b = world.block(1)
    assert b.state == STACKED and b.support == 2
    assert b.bottom_z == pytest.approx(support.top_z, abs=1e-6)


def test_release_with_poor_overlap_falls_past():
    support = block_at(2, 0.0, 0.0, 0.025)
    world = release(carried_world((0.05, 0.0), 0.15, extra=[support]))
    b = world.block(1)
    assert b.state == FREE
    assert b.bottom_z == pytest.approx(0.0, abs=1e-9)


def test_release_at_tower_base_roots_the_tower():
    world = release(carried_world((0.0, -0.15), 0.1))
    b = world.block(1)
    assert b.state == STACKED and b.support is FLOOR
    assert tower_height(world) == 1


def test_release_requires_open_gripper():
    world = carried_world((0.0, 0.0), 0.2)
    closed = World(robot=world.robot.with_gripper(0.1), blocks=world.blocks,
                   danger_zones=(), tower_base=world.tower_base, floor_z=0.0,
                   grasped_id=1, config=world.config)
    assert release(closed).grasped_id == 1


# ---------------------------------------------------------------------------
# tower_height


def test_tower_height_empty():
    assert tower_height(make_world(blocks=[block_at(1, 0.3, 0.3, 0.025)])) == 0


def test_tower_height_chain_of_three():
    blocks = [
        block_at(1, 0.0, -0.15, 0.025, state=STACKED, support=FLOOR),
        block_at(2, 0.0, -0.15, 0.075, state=STACKED, support=1),
        block_at(3, 0.0, -0.15, 0.125, state=STACKED, support=2),
    ]
    assert tower_height(make_world(blocks=blocks)) == 3


def test_tower_ignores_unrelated_free_blocks():
    blocks = [
        block_at(1, 0.0, -0.15, 0.025, state=STACKED, support=FLOOR),
        block_at(2, 0.4, 0.2, 0.025),
        block_at(3, -0.3, 0.1, 0.025),
    ]
    assert tower_height(make_world(blocks=blocks)) == 1


def test_tower_requires_root_near_base():
    blocks = [block_at(1, 0.5, 0.5, 0.025, state=STACKED, support=FLOOR)]
    assert tower_height(make_world(blocks=blocks)) == 0


# ---------------------------------------------------------------------------
# invariants


def test_blocks_conserved_and_rigid_while_carried():
    rng = np.random.default_rng(13)
    world = grasp_setup(np.array([0.0, 0.0, 0.0]))
    ids = sorted(b.id for b in world.blocks)
    world = try_grasp(world)
    assert world.grasped_id == 1
    for step in range(40):
        cmd = frame(grow_axis=rng.uniform(-1, 1), lr=rng.uniform(-1, 1),
                    ud=rng.uniform(-1, 1), grip=1.0)
        world = apply_command(world, cmd, 0.1)
        assert sorted(b.id for b in world.blocks) == ids
        tip = tip_pose(world.robot)
        local = quat_to_matrix(tip.orientation).T @ (world.block(1).position
                                                     - tip.position)
        assert_allclose(local, [0.0, 0.0, world.config.grasp_offset], atol=1e-9)


def test_no_teleportation_per_step():
    rng = np.random.default_rng(19)
    world = grasp_setup(np.array([0.0, 0.0, 0.0]))
    world = try_grasp(world)
    for _ in range(30):
        gp_before = grasp_point(world.robot, world.config.grasp_offset)
        before = {b.id: b.position.copy() for b in world.blocks}
        cmd = frame(grow_axis=rng.uniform(-1, 1), lr=rng.uniform(-1, 1),
                    ud=rng.uniform(-1, 1), grip=1.0)
        world = apply_command(world, cmd, 0.1)
        gp_delta = np.linalg.norm(
            grasp_point(world.robot, world.config.grasp_offset) - gp_before)
        for b in world.blocks:
            moved = np.linalg.norm(b.position - before[b.id])
            if b.state == GRASPED:
                assert moved <= gp_delta + 1e-9
            else:
                assert moved == 0.0


def test_support_soundness_after_release():
    rng = np.random.default_rng(23)
    support = block_at(2, 0.0, 0.0, 0.025)
    for _ in range(20):
        offset = rng.uniform(-0.06, 0.06, 2)
        world = release(carried_world(tuple(offset), 0.2, extra=[support]))
        for b in world.blocks:
            if b.state != STACKED:
                continue
            if b.support is FLOOR:
                assert b.bottom_z == pytest.approx(world.floor_z, abs=1e-6)
            else:
                parent = world.block(b.support)
                assert b.bottom_z == pytest.approx(parent.top_z, abs=1e-6)
                horiz = np.linalg.norm(b.position[:2] - parent.position[:2])
                assert horiz < world.config.support_overlap


# ---------------------------------------------------------------------------
# scenarios


SCENARIO = {
    "robot": {"base": [0.0, 0.0, 0.6], "max_length": 2.0},
    "world": {"grow_rate": 0.2},
    "blocks": [
        {"id": 1, "center": [0.1, 0.0, 0.025]},
        {"id": 2, "center": [0.0, -0.15, 0.025], "state": "stacked",
         "support": "floor"},
    ],
    "danger_zones": [{"center": [0.3, 0.3, 0.2], "radius": 0.1}],
    "tower_base": [0.0, -0.15],
    "floor_z": 0.0,
}


def test_scenario_load_is_deterministic(tmp_path):
    import json
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(SCENARIO))
    a, b = load_scenario(path), load_scenario(path)
    assert a.config == b.config
    assert a.blocks == b.blocks
    assert a.robot.config.max_length == 2.0
    assert a.config.grow_rate == 0.2
    assert len(a.danger_zones) == 1
    assert tower_height(a) == 1
    base_axis = quat_rotate(a.robot.base.orientation, np.array([0.0, 0.0, 1.0]))
    assert_allclose(base_axis, [0.0, 0.0, -1.0], atol=1e-12)  # points into the room


def test_scenario_rejects_unknown_keys():
    bad = dict(SCENARIO)
    bad["extra"] = 1
    with pytest.raises(ScenarioError):
        load_scenario(bad)
    bad = dict(SCENARIO)
    bad["robot"] = {"base": [0, 0, 0.6], "typo": 1}
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_scenario_rejects_duplicate_ids():
    bad = dict(SCENARIO)
    bad["blocks"] = [{"id": 1, "center": [0, 0, 0.025]},
                     {"id": 1, "center": [0.1, 0, 0.025]}]
    with pytest.raises(ValueError):
        load_scenario(bad)


def test_danger_zone_validation():
    with pytest.raises(ValueError):
        DangerZone(np.array([0.0, 0.0, 0.0]), 0.0)
