"""Piecewise-constant-curvature model of a ceiling-mounted growing robot.

The backbone is a chain of circular arcs (length, curvature magnitude,
bend-plane angle). Growth adds material at the distal end only, so everything
already deployed stays put; retraction removes material from the distal end;
live steering reshapes just the distal window of arc. All operations return a
new state and never mutate their input.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, quat_from_axis_angle, quat_to_matrix

# Below this bend angle (kappa * length, rad) the arc transform switches to a
# 2nd-order series to avoid the 1/kappa blowup.
STRAIGHT_THRESHOLD = 1e-6

# Per-segment bend angle cap: a single arc never curls to a half circle.
_MAX_ARC = math.pi * (1.0 - 1e-9)

# Adjacent material with (kappa, phi) closer than this extends the distal
# segment instead of appending a new one.
_MERGE_TOL = 1e-9

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class KinematicsConfig:
    """Tunable limits of the growing robot."""

    max_length: float = 2.5        # m of deployable material
    kappa_max: float = 3.0         # 1/m, bound on steering curvature norm
    kappa_rate: float = 1.0        # 1/m per second at full axis deflection
    window_length: float = 0.2     # m of distal arc the live steering reshapes

    def __post_init__(self):
        if not (self.max_length >= 0 and self.kappa_max > 0 and self.kappa_rate > 0
                and self.window_length > 0):
            raise ValueError("kinematics config values out of range")


@dataclass(frozen=True)
class Steering:
    """Live tip curvature command, split into two signed components (1/m)."""

    kappa_lr: float = 0.0
    kappa_ud: float = 0.0

    def magnitude(self) -> float:
        return math.hypot(self.kappa_lr, self.kappa_ud)

    def kappa_phi(self) -> tuple[float, float]:
        """Curvature magnitude and canonical bend-plane angle in [0, 2pi)."""
        kappa = self.magnitude()
        if kappa == 0.0:
            return 0.0, 0.0
        phi = math.atan2(self.kappa_ud, self.kappa_lr) % _TWO_PI
        return kappa, phi


@dataclass(frozen=True)
class Segment:
    """One constant-curvature arc of deployed material."""

    length: float   # m, > 0
    kappa: float    # 1/m, >= 0
    phi: float      # rad, bend-plane angle in [0, 2pi); 0 when straight

    def __post_init__(self):
        ok = (
            math.isfinite(self.length) and math.isfinite(self.kappa)
            and math.isfinite(self.phi)
            and self.length > 0.0 and self.kappa >= 0.0
            and self.kappa * self.length < math.pi
            and 0.0 <= self.phi < _TWO_PI
        )
        if not ok:
            raise ValueError(f"invalid segment ({self.length}, {self.kappa}, {self.phi})")
        if self.kappa == 0.0 and self.phi != 0.0:
            raise ValueError("straight segments must carry phi == 0")


def _arc_pose(length: float, kappa: float, phi: float) -> Pose:
    """Proximal-to-distal transform of a constant-curvature arc.

    The arc leaves along local +z and bends toward the direction
    (cos phi, sin phi) in the local xy plane.
    """
    theta = kappa * length
    if theta < STRAIGHT_THRESHOLD:
        # series for the translation; exact identity rotation at kappa == 0
        radial = 0.5 * kappa * length * length * (1.0 - theta * theta / 12.0)
        axial = length * (1.0 - theta * theta / 6.0)
    else:
        radial = (1.0 - math.cos(theta)) / kappa
        axial = math.sin(theta) / kappa
    position = np.array([radial * math.cos(phi), radial * math.sin(phi), axial])
    if theta == 0.0:
        return Pose(position, np.array([1.0, 0.0, 0.0, 0.0]))
    axis = (-math.sin(phi), math.cos(phi), 0.0)
    return Pose(position, quat_from_axis_angle(axis, theta))


def segment_transform(seg: Segment) -> Pose:
    """Rigid transform from a segment's proximal frame to its distal frame."""
    return _arc_pose(seg.length, seg.kappa, seg.phi)


def _arc_points(lengths: np.ndarray, kappa: float, phi: float) -> np.ndarray:
    """Local positions at arc lengths `lengths` along one segment, vectorized."""
    theta = kappa * lengths
    small = theta < STRAIGHT_THRESHOLD
    radial = np.where(
        small,
        0.5 * kappa * lengths * lengths * (1.0 - theta * theta / 12.0),
        (1.0 - np.cos(theta)) / (kappa if kappa > 0.0 else 1.0),
    )
    axial = np.where(small, lengths * (1.0 - theta * theta / 6.0),
                     np.sin(theta) / (kappa if kappa > 0.0 else 1.0))
    out = np.empty((len(lengths), 3))
    out[:, 0] = radial * math.cos(phi)
    out[:, 1] = radial * math.sin(phi)
    out[:, 2] = axial
    return out


def _chain(base: Pose, segments: tuple[Segment, ...],
           start: int = 0, prefix: tuple[Pose, ...] = ()) -> tuple[Pose, ...]:
    """Cumulative world pose at each segment end, reusing `prefix[:start]`."""
    ends = list(prefix[:start])
    pose = base if start == 0 else ends[-1]
    for seg in segments[start:]:
        pose = pose.compose(segment_transform(seg))
        ends.append(pose)
    return tuple(ends)


def _cumulative(segments: tuple[Segment, ...]) -> tuple[float, ...]:
    total = 0.0
    out = []
    for seg in segments:
        total += seg.length
        out.append(total)
    return tuple(out)


@dataclass(frozen=True)
class RobotState:
    """Full kinematic state: base anchor, deployed arcs, live steering, gripper.

    `segments` runs proximal to distal. Cached per-segment end poses and
    cumulative lengths ride along so repeated queries stay cheap; operations
    rebuild only the tail they changed.
    """

    base: Pose
    segments: tuple[Segment, ...]
    steering: Steering
    config: KinematicsConfig
    gripper_aperture: float
    total_length: float
    seg_ends: tuple[Pose, ...] = field(repr=False, compare=False, default=())
    cum_lengths: tuple[float, ...] = field(repr=False, compare=False, default=())

    @staticmethod
    def create(base: Pose | None = None,
               segments: tuple[Segment, ...] = (),
               steering: Steering = Steering(),
               config: KinematicsConfig = KinematicsConfig(),
               gripper_aperture: float = 1.0) -> "RobotState":
        base = base if base is not None else Pose.identity()
        segments = tuple(segments)
        cum = _cumulative(segments)
        total = math.fsum(s.length for s in segments)
        if total > config.max_length + 1e-9:
            raise ValueError(f"total length {total} exceeds max_length {config.max_length}")
        if steering.magnitude() > config.kappa_max + 1e-9:
            raise ValueError("steering magnitude exceeds kappa_max")
        if not (math.isfinite(gripper_aperture) and 0.0 <= gripper_aperture <= 1.0):
            raise ValueError("gripper aperture must lie in [0, 1]")
        return RobotState(base, segments, steering, config, gripper_aperture,
                          total, _chain(base, segments), cum)

    def _with(self, segments: tuple[Segment, ...], first_changed: int,
              steering: Steering | None = None,
              gripper_aperture: float | None = None) -> "RobotState":
        """New state reusing cached poses proximal of `first_changed`."""
        ends = _chain(self.base, segments, first_changed, self.seg_ends)
        return RobotState(
            self.base, segments,
            self.steering if steering is None else steering,
            self.config,
            self.gripper_aperture if gripper_aperture is None else gripper_aperture,
            math.fsum(s.length for s in segments),
            ends, _cumulative(segments),
        )

    def with_gripper(self, aperture: float) -> "RobotState":
        if not (math.isfinite(aperture) and 0.0 <= aperture <= 1.0):
            raise ValueError("gripper aperture must lie in [0, 1]")
        return replace(self, gripper_aperture=aperture)


def _append_material(segments: list[Segment], delta: float,
                     kappa: float, phi: float) -> int:
    """Add `delta` m of arc with the given shape; returns first changed index.

    Extends the distal segment when the shape matches and the bend-angle cap
    allows, otherwise appends; long additions are chunked below the cap.
    """
    first_changed = len(segments)
    remaining = delta
    if segments:
        last = segments[-1]
        if abs(last.kappa - kappa) < _MERGE_TOL and abs(last.phi - phi) < _MERGE_TOL:
            room = math.inf if kappa == 0.0 else _MAX_ARC / kappa - last.length
            ext = min(remaining, room)
            if ext > 0.0:
                segments[-1] = Segment(last.length + ext, last.kappa, last.phi)
                remaining -= ext
                first_changed = len(segments) - 1
    while remaining > 0.0:
        piece = remaining if kappa == 0.0 else min(remaining, _MAX_ARC / kappa)
        segments.append(Segment(piece, kappa, phi))
        remaining -= piece
    return min(first_changed, len(segments) - 1) if segments else 0


def grow(robot: RobotState, delta: float) -> RobotState:
    """Evert `delta` m of new material at the tip, clamped to max_length.

    The fresh arc takes the current steering; everything already deployed is
    untouched, so backbone points at arc lengths <= the old total stay fixed.
    """
    if not (math.isfinite(delta) and delta > 0.0):
        raise ValueError("grow requires a positive, finite delta")
    effective = min(delta, robot.config.max_length - robot.total_length)
    if effective <= 0.0:
        return robot
    kappa, phi = robot.steering.kappa_phi()
    segs = list(robot.segments)
    first_changed = _append_material(segs, effective, kappa, phi)
    return robot._with(tuple(segs), first_changed)


def retract(robot: RobotState, delta: float) -> RobotState:
    """Pull `delta` m of material back in at the tip, clamped at empty."""
    if not (math.isfinite(delta) and delta > 0.0):
        raise ValueError("retract requires a positive, finite delta")
    removal = min(delta, robot.total_length)
    if removal <= 0.0:
        return robot
    segs = list(robot.segments)
    while segs and removal >= segs[-1].length:
        removal -= segs[-1].length
        segs.pop()
    if segs and removal > 0.0:
        last = segs[-1]
        segs[-1] = Segment(last.length - removal, last.kappa, last.phi)
    return robot._with(tuple(segs), len(segs) - 1 if segs else 0)


def _split_at(segments: tuple[Segment, ...], s: float) -> list[Segment]:
    """Segments covering exactly [0, s] of arc; splits a segment if needed."""
    out: list[Segment] = []
    remaining = s
    for seg in segments:
        if remaining <= 0.0:
            break
        if remaining >= seg.length:
            out.append(seg)
            remaining -= seg.length
        else:
            out.append(Segment(remaining, seg.kappa, seg.phi))
            remaining = 0.0
    return out


def steer(robot: RobotState, lr_axis: float, ud_axis: float, dt: float) -> RobotState:
    """Integrate the steering command and reshape the distal window.

    Curvature components follow the axes at `kappa_rate`, the combined
    magnitude is clamped to `kappa_max` (and to the per-segment bend cap for
    the current window), and the distal `window_length` of arc is re-bent in
    place. Material proximal of the window never moves. Steering by (a, b)
    then (-a, -b) over equal dt restores the backbone, provided no clamp
    engaged.
    """
    if not (math.isfinite(lr_axis) and math.isfinite(ud_axis)
            and -1.0 <= lr_axis <= 1.0 and -1.0 <= ud_axis <= 1.0):
        raise ValueError("steering axes must lie in [-1, 1]")
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError("steer requires a positive, finite dt")
    cfg = robot.config
    k_lr = robot.steering.kappa_lr + lr_axis * cfg.kappa_rate * dt
    k_ud = robot.steering.kappa_ud + ud_axis * cfg.kappa_rate * dt
    window = min(cfg.window_length, robot.total_length)
    limit = cfg.kappa_max
    if window > 0.0:
        limit = min(limit, _MAX_ARC / window)
    mag = math.hypot(k_lr, k_ud)
    if mag > limit:
        scale = limit / mag
        k_lr *= scale
        k_ud *= scale
    steering = Steering(k_lr, k_ud)
    if window <= 0.0:
        return replace(robot, steering=steering)
    kappa, phi = steering.kappa_phi()
    if steering == robot.steering and robot.segments:
        # re-shaping is a no-op when the distal material already holds the
        # commanded shape over the whole window
        last = robot.segments[-1]
        if (abs(last.kappa - kappa) < _MERGE_TOL and abs(last.phi - phi) < _MERGE_TOL
                and last.length >= window):
            return robot
    prox = _split_at(robot.segments, robot.total_length - window)
    first_changed = len(prox)
    # the split may have shortened the boundary segment, invalidating its end
    if len(prox) > 0 and (len(prox) > len(robot.segments)
                          or prox[-1] is not robot.segments[len(prox) - 1]):
        first_changed = len(prox) - 1
    _append_material(prox, window, kappa, phi)
    return robot._with(tuple(prox), min(first_changed, len(prox) - 1), steering=steering)


def forward_kinematics(robot: RobotState, s: float) -> Pose:
    """Pose of the backbone point at arc length `s` from the base."""
    if not math.isfinite(s) or s < -1e-12 or s > robot.total_length + 1e-9:
        raise ValueError(f"arc length {s} outside [0, {robot.total_length}]")
    s = min(max(s, 0.0), robot.total_length)
    if not robot.segments or s == 0.0:
        return robot.base
    idx = bisect_right(robot.cum_lengths, s)
    if idx >= len(robot.segments):
        idx = len(robot.segments) - 1
    start = robot.base if idx == 0 else robot.seg_ends[idx - 1]
    residual = s - (0.0 if idx == 0 else robot.cum_lengths[idx - 1])
    seg = robot.segments[idx]
    return start.compose(_arc_pose(max(residual, 0.0), seg.kappa, seg.phi))


def tip_pose(robot: RobotState) -> Pose:
    """Pose of the distal tip; the base pose for a zero-length robot."""
    return robot.seg_ends[-1] if robot.segments else robot.base


def backbone_polyline(robot: RobotState, n: int) -> np.ndarray:
    """(n, 3) backbone positions at uniform arc spacing from base to tip."""
    if n < 2:
        raise ValueError("polyline needs at least 2 samples")
    if not robot.segments:
        return np.tile(robot.base.position, (n, 1))
    s = np.linspace(0.0, robot.total_length, n)
    cum = np.asarray(robot.cum_lengths)
    idx = np.searchsorted(cum, s, side="right")
    idx[idx >= len(robot.segments)] = len(robot.segments) - 1
    out = np.empty((n, 3))
    for seg_i in np.unique(idx):
        mask = idx == seg_i
        start = robot.base if seg_i == 0 else robot.seg_ends[seg_i - 1]
        prev_len = 0.0 if seg_i == 0 else cum[seg_i - 1]
        seg = robot.segments[seg_i]
        local = _arc_points(np.maximum(s[mask] - prev_len, 0.0), seg.kappa, seg.phi)
        out[mask] = start.position + local @ quat_to_matrix(start.orientation).T
    return out
