"""Minimal rigid-body math: unit quaternions ([w, x, y, z]) and poses.

Kept deliberately small and dependency-free so the kinematics stays easy to
audit; everything here is ordinary Hamilton-convention quaternion algebra.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_UNIT_TOL = 1e-9


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n

def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by `angle` (rad) about `axis` (unit 3-vector)."""
    ax, ay, az = axis
    half = 0.5 * angle
    s = math.sin(half)
    return np.array([math.cos(half), ax * s, ay * s, az * s])


def quat_rotate(q: np.ndarray, v) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion (q * v * q^-1)."""
    qw = q[0]
    qv = q[1:]
    t = 2.0 * np.cross(qv, v)
    return v + qw * t + np.cross(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion (for batched point rotation)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle (rad) between two unit quaternions, sign-insensitive."""
    dot = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(1.0, dot))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: position (m) plus unit quaternion orientation."""

    position: np.ndarray
    orientation: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, Pose)
                and self.position.tolist() == other.position.tolist()
                and self.orientation.tolist() == other.orientation.tolist())

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        q = np.asarray(self.orientation, dtype=float)
        if pos.shape != (3,) or q.shape != (4,):
            raise ValueError("pose needs a 3-vector position and a 4-vector quaternion")
        if not (np.isfinite(pos).all() and np.isfinite(q).all()):
            raise ValueError("pose fields must be finite")
        if abs(float(np.dot(q, q)) - 1.0) > 2.0 * _UNIT_TOL:
            q = quat_normalize(q)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), quat_identity())

    def compose(self, other: "Pose") -> "Pose":
        """This pose followed by `other` expressed in this pose's frame."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_normalize(quat_mul(self.orientation, other.orientation)),
        )

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, np.asarray(p, dtype=float))
