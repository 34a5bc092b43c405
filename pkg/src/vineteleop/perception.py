"""Simulated scene tracking: periodic snapshots of tip and block poses.

Stands in for a camera pipeline with a ground-truth-plus-noise model:
estimates are the true values of a (configurably) delayed world state plus
independent per-axis Gaussian noise from a seeded generator, so every
snapshot stream is reproducible bit for bit.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .kinematics import tip_pose
from .world import DangerZone, World

DEFAULT_RATE_HZ = 30.0


@dataclass(frozen=True)
class NoiseConfig:
    sigma_pos: float = 0.0   # m, per-axis std of position noise
    latency: float = 0.0     # s, how stale the reported state is
    seed: int = 0

    def __post_init__(self):
        if self.sigma_pos < 0 or self.latency < 0:
            raise ValueError("sigma_pos and latency must be non-negative")


@dataclass(frozen=True)
class SceneBlock:
    id: int
    position: np.ndarray
    state: str  # "free", "grasped", "stacked@floor", "stacked@<id>"


@dataclass(frozen=True)
class TrackedScene:
    t: float
    tip: np.ndarray
    blocks: tuple[SceneBlock, ...]
    danger_zones: tuple[DangerZone, ...]

    def block(self, block_id: int) -> SceneBlock | None:
        for b in self.blocks:
            if b.id == block_id:
                return b
        return None


def schedule_rate(rate_hz: float = DEFAULT_RATE_HZ) -> float:
    """Snapshot period in seconds for the configured tracking rate."""
    if not (math.isfinite(rate_hz) and rate_hz > 0):
        raise ValueError("tracking rate must be positive")
    return 1.0 / rate_hz


class PerceptionSimulator:
    """Produces TrackedScene snapshots from successive world states.

    Keeps just enough world history to serve the configured latency; with
    zero noise and zero latency a snapshot is the exact ground truth.
    """

    def __init__(self, cfg: NoiseConfig = NoiseConfig(),
                 period: float = schedule_rate()):
        if period <= 0:
            raise ValueError("snapshot period must be positive")
        self.cfg = cfg
        self.period = period
        self._rng = np.random.default_rng(cfg.seed)
        self._history: deque[World] = deque(
            maxlen=int(math.ceil(cfg.latency / period)) + 1)

    def _noisy(self, position: np.ndarray) -> np.ndarray:
        if self.cfg.sigma_pos == 0.0:
            return position
        return position + self._rng.normal(0.0, self.cfg.sigma_pos, 3)

    def snapshot(self, world: World) -> TrackedScene:
        """Observe the world; the scene timestamp is the current world time."""
        self._history.append(world)
        target = world.time - self.cfg.latency
        observed = self._history[0]
        for past in self._history:
            if past.time <= target + 1e-12:
                observed = past
            else:
                break
        tip = self._noisy(tip_pose(observed.robot).position)
        blocks = tuple(
            SceneBlock(b.id, self._noisy(b.position), b.state_label())
            for b in observed.blocks)
        return TrackedScene(world.time, tip, blocks, observed.danger_zones)
