"""Hand-sample stream to robot-command pipeline.

A high-rate stream of timestamped hand positions (nominally 270 Hz) is
calibrated against a neutral point and facing direction, then decimated into
10 Hz command frames whose signed axes come from displacement along the
operator's forward / lateral / vertical directions. The mapping depends only
on displacement from the neutral point expressed in the calibrated basis, so
translating the capture frame or rotating it about vertical changes nothing.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, TextIO

import numpy as np

# Emitted axes are snapped to this grid. It is the wire resolution of the
# command channel and what makes frame sequences byte-stable under capture
# frame changes.
AXIS_QUANTUM = 1e-6

MIN_CALIBRATION_SAMPLES = 27  # 0.1 s of buffer at the nominal input rate


@dataclass(frozen=True)
class GestureConfig:
    """Displacement-to-axis mapping constants (meters)."""

    deadband: float = 0.05
    saturation: float = 0.25

    def __post_init__(self):
        if not (0.0 <= self.deadband < self.saturation):
            raise ValueError("need 0 <= deadband < saturation")


@dataclass(frozen=True)
class HandSample:
    """One capture-frame hand observation: time (s), position (m), grip [0,1]."""

    t: float
    position: np.ndarray
    grip: float

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,) or not np.isfinite(pos).all() or not math.isfinite(self.t):
            raise ValueError("hand sample fields must be finite (position is a 3-vector)")
        if not math.isfinite(self.grip):
            raise ValueError("grip must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "grip", min(1.0, max(0.0, self.grip)))


@dataclass(frozen=True)
class GestureCalibration:
    """Neutral hand position plus the operator's horizontal facing direction."""

    neutral: np.ndarray
    forward: np.ndarray  # horizontal unit 2-vector

    def __post_init__(self):
        neutral = np.asarray(self.neutral, dtype=float)
        forward = np.asarray(self.forward, dtype=float)
        if neutral.shape != (3,) or not np.isfinite(neutral).all():
            raise ValueError("neutral must be a finite 3-vector")
        if forward.shape != (2,) or not np.isfinite(forward).all():
            raise ValueError("forward must be a finite 2-vector")
        if abs(float(forward @ forward) - 1.0) > 1e-6:
            raise ValueError("forward must be unit length")
        object.__setattr__(self, "neutral", neutral)
        object.__setattr__(self, "forward", forward)


@dataclass(frozen=True)
class CommandFrame:
    """One 10 Hz robot command: three signed axes plus grip passthrough."""

    seq: int
    t: float
    grow_axis: float
    lr_axis: float
    ud_axis: float
    grip: float


def _quantize(value: float) -> float:
    q = round(value / AXIS_QUANTUM) * AXIS_QUANTUM
    return 0.0 if q == 0.0 else q


def _axis(displacement: float, cfg: GestureConfig) -> float:
    mag = abs(displacement)
    if mag < cfg.deadband:
        return 0.0
    scaled = min(1.0, (mag - cfg.deadband) / (cfg.saturation - cfg.deadband))
    return _quantize(math.copysign(scaled, displacement))


def calibrate(samples: Iterable[HandSample], facing,
              min_samples: int = MIN_CALIBRATION_SAMPLES) -> GestureCalibration:
    """Average a short burst of samples into the neutral point.

    `facing` is the operator's horizontal facing direction (unit 2-vector);
    it defines the forward axis of every later command.
    """
    samples = list(samples)
    if len(samples) < min_samples:
        raise ValueError(f"calibration needs at least {min_samples} samples, "
                         f"got {len(samples)}")
    neutral = np.mean([s.position for s in samples], axis=0)
    return GestureCalibration(neutral, np.asarray(facing, dtype=float))


def _axes_from_displacement(d: np.ndarray, cal: GestureCalibration,
                            cfg: GestureConfig) -> tuple[float, float, float]:
    fx, fy = cal.forward
    forward_component = d[0] * fx + d[1] * fy
    lateral_component = -d[0] * fy + d[1] * fx  # along up x forward
    vertical_component = d[2]
    return (_axis(forward_component, cfg),
            _axis(lateral_component, cfg),
            _axis(vertical_component, cfg))


def axis_values(sample: HandSample, cal: GestureCalibration,
                cfg: GestureConfig = GestureConfig()) -> tuple[float, float, float, float]:
    """Map one sample to (grow, lr, ud, grip).

    Forward displacement grows, backward retracts; lateral displacement
    (positive toward the operator's left) steers left/right; vertical
    displacement steers up/down. Each passes through a deadband then a linear
    ramp that saturates at +-1; grip passes straight through.
    """
    grow_axis, lr_axis, ud_axis = _axes_from_displacement(
        sample.position - cal.neutral, cal, cfg)
    return grow_axis, lr_axis, ud_axis, _quantize(sample.grip)


def displacement_for_axes(grow_axis: float, lr_axis: float, ud_axis: float,
                          cal: GestureCalibration,
                          cfg: GestureConfig = GestureConfig()) -> np.ndarray:
    """Capture-frame hand position that maps back to the given axis values.

    Inverse of `axis_values` up to quantization: useful for scripted
    operators and end-to-end tests.
    """
    def inverse(axis: float) -> float:
        if axis == 0.0:
            return 0.0
        return math.copysign(
            cfg.deadband + abs(axis) * (cfg.saturation - cfg.deadband), axis)

    fx, fy = cal.forward
    forward3 = np.array([fx, fy, 0.0])
    left3 = np.array([-fy, fx, 0.0])
    up3 = np.array([0.0, 0.0, 1.0])
    return (cal.neutral + inverse(grow_axis) * forward3
            + inverse(lr_axis) * left3 + inverse(ud_axis) * up3)


class WindowDecimator:
    """Incremental command framing over fixed windows of sample time.

    Window k covers [t0 + k*period, t0 + (k+1)*period) where t0 is the first
    sample's timestamp. Boundaries are exact rationals so tick scheduling and
    window assignment can never disagree. The caller pushes samples in time
    order and closes windows as their end boundaries pass; empty windows
    repeat the previous frame (or all zeros at the start of a stream).
    """

    def __init__(self, cal: GestureCalibration, cfg: GestureConfig,
                 period: Fraction):
        if period <= 0:
            raise ValueError("window period must be positive")
        self.cal = cal
        self.cfg = cfg
        self.period = Fraction(period)
        self.t0: float | None = None
        self.window_index = 0
        self.seq = 0
        self._last_t: float | None = None
        self._pos_sum = np.zeros(3)
        self._grip_sum = 0.0
        self._count = 0
        self._prev_axes: tuple[float, float, float, float] | None = None

    def next_boundary(self) -> float:
        """Absolute time at which the open window ends."""
        if self.t0 is None:
            raise ValueError("no samples pushed yet")
        return self.t0 + float((self.window_index + 1) * self.period)

    def push(self, sample: HandSample) -> None:
        """Add a sample to the open window; timestamps must not decrease."""
        if self._last_t is not None and sample.t < self._last_t:
            raise ValueError(f"sample timestamps must be non-decreasing "
                             f"({sample.t} after {self._last_t})")
        self._last_t = sample.t
        if self.t0 is None:
            self.t0 = sample.t
        self._pos_sum = self._pos_sum + sample.position
        self._grip_sum += sample.grip
        self._count += 1

    def close_window(self) -> CommandFrame:
        """Emit the frame for the open window and advance to the next one."""
        if self.t0 is None:
            raise ValueError("cannot close a window before any sample arrived")
        if self._count > 0:
            mean_pos = self._pos_sum / self._count
            grow_axis, lr_axis, ud_axis = _axes_from_displacement(
                mean_pos - self.cal.neutral, self.cal, self.cfg)
            axes = (grow_axis, lr_axis, ud_axis,
                    _quantize(self._grip_sum / self._count))
            self._prev_axes = axes
        elif self._prev_axes is not None:
            axes = self._prev_axes
        else:
            axes = (0.0, 0.0, 0.0, 0.0)
        frame = CommandFrame(self.seq,
                             self.t0 + float(self.window_index * self.period),
                             *axes)
        self.seq += 1
        self.window_index += 1
        self._pos_sum = np.zeros(3)
        self._grip_sum = 0.0
        self._count = 0
        return frame


def decimate(samples: Iterable[HandSample], cal: GestureCalibration,
             cfg: GestureConfig = GestureConfig(),
             period: Fraction = Fraction(1, 10)) -> list[CommandFrame]:
    """Reduce a time-ordered sample stream to one command frame per window.

    Emits exactly one frame per window from the first sample through the
    window containing the last sample; a trace of duration D yields
    floor(D / period) frames when sampled densely.
    """
    dec = WindowDecimator(cal, cfg, period)
    frames: list[CommandFrame] = []
    for sample in samples:
        if dec.t0 is not None:
            while sample.t >= dec.next_boundary():
                frames.append(dec.close_window())
        dec.push(sample)
    if dec.t0 is not None:
        frames.append(dec.close_window())
    return frames


# ---------------------------------------------------------------------------
# trace files: one JSON object per line, calibration header first


def format_calibration(cal: GestureCalibration) -> str:
    return json.dumps({"cal": {"neutral": list(cal.neutral),
                               "forward": list(cal.forward)}},
                      separators=(",", ":"))


def format_sample(sample: HandSample) -> str:
    return json.dumps({"t": sample.t, "p": list(sample.position),
                       "grip": sample.grip}, separators=(",", ":"))


class TraceError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"trace line {line_number}: {message}")
        self.line_number = line_number


def write_trace(path, cal: GestureCalibration, samples: Iterable[HandSample]) -> int:
    """Write a replayable trace; returns the number of sample lines."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_calibration(cal) + "\n")
        for sample in samples:
            fh.write(format_sample(sample) + "\n")
            count += 1
    return count


def _parse_sample(obj: dict, line_number: int) -> HandSample:
    try:
        return HandSample(float(obj["t"]), np.array(obj["p"], dtype=float),
                          float(obj["grip"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(line_number, f"bad sample record: {exc}") from exc


def iter_trace(fh: TextIO) -> Iterator[tuple[GestureCalibration | None, HandSample | None]]:
    """Yield (calibration, None) for the header then (None, sample) per line."""
    for line_number, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(line_number, f"invalid JSON: {exc}") from exc
        if "cal" in obj:
            cal = obj["cal"]
            try:
                yield GestureCalibration(np.array(cal["neutral"], dtype=float),
                                         np.array(cal["forward"], dtype=float)), None
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceError(line_number, f"bad calibration record: {exc}") from exc
        else:
            yield None, _parse_sample(obj, line_number)


def read_trace(path) -> tuple[GestureCalibration, list[HandSample]]:
    """Parse a trace file; the first line must be the calibration header."""
    cal: GestureCalibration | None = None
    samples: list[HandSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for parsed_cal, sample in iter_trace(fh):
            if parsed_cal is not None:
                if cal is not None:
                    raise TraceError(0, "duplicate calibration header")
                cal = parsed_cal
            else:
                if cal is None:
                    raise TraceError(1, "first line must be the calibration header")
                samples.append(sample)
    if cal is None:
        raise TraceError(1, "trace has no calibration header")
    return cal, samples
