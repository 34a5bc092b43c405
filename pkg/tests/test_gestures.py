"""Gesture pipeline tests: calibration, axis mapping, decimation, trace I/O."""
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vineteleop.gestures import (
    GestureCalibration,
    GestureConfig,
    HandSample,
    TraceError,
    axis_values,
    calibrate,
    decimate,
    read_trace,
    write_trace,
)

CFG = GestureConfig()
CAL = GestureCalibration(np.zeros(3), np.array([1.0, 0.0]))


def sample(t, x, y, z, grip=0.0):
    return HandSample(t, np.array([x, y, z], dtype=float), grip)


def frames_bytes(frames):
    return json.dumps([[f.seq, f.t, f.grow_axis, f.lr_axis, f.ud_axis, f.grip]
                       for f in frames]).encode()


def burst(n, position, t0=0.0, rate=270.0, grip=0.0):
    return [sample(t0 + i / rate, *position, grip=grip) for i in range(n)]


# ---------------------------------------------------------------------------
# calibrate


def test_calibrate_identical_samples():
    cal = calibrate(burst(27, (0.4, -0.2, 1.1)), [0.0, 1.0])
    assert_allclose(cal.neutral, [0.4, -0.2, 1.1])


def test_calibrate_symmetric_samples():
    center = np.array([1.0, 2.0, 3.0])
    offsets = [np.array([dx, dy, dz]) for dx in (-0.1, 0.1)
               for dy in (-0.2, 0.2) for dz in (-0.05, 0.05)]
    samples = [HandSample(i / 270.0, center + o, 0.0)
               for i, o in enumerate(offsets * 4)]
    cal = calibrate(samples, [1.0, 0.0])
    assert_allclose(cal.neutral, center, atol=1e-15)


def test_calibrate_matches_mean_oracle():
    rng = np.random.default_rng(2)
    positions = rng.normal(size=(270, 3))
    samples = [HandSample(i / 270.0, p, 0.0) for i, p in enumerate(positions)]
    cal = calibrate(samples, [0.0, -1.0])
    assert np.abs(cal.neutral - positions.mean(axis=0)).max() < 1e-12


def test_calibrate_rejects_short_burst():
    with pytest.raises(ValueError):
        calibrate(burst(26, (0, 0, 0)), [1.0, 0.0])


def test_calibration_rejects_non_unit_facing():
    with pytest.raises(ValueError):
        GestureCalibration(np.zeros(3), np.array([1.0, 1.0]))


# ---------------------------------------------------------------------------
# axis_values


def test_zero_displacement_is_all_deadband():
    axes = axis_values(sample(0.0, 0, 0, 0, grip=0.7), CAL, CFG)
    assert axes == (0.0, 0.0, 0.0, 0.7)


def test_forward_displacement_maps_linearly():
    axes = axis_values(sample(0.0, 0.15, 0, 0), CAL, CFG)
    assert axes[0] == pytest.approx(0.5, abs=1e-9)
    assert axes[1] == axes[2] == 0.0


def test_simultaneous_saturation():
    axes = axis_values(sample(0.0, 0.30, 0.30, 0.0), CAL, CFG)
    assert axes[0] == 1.0
    assert axes[1] == 1.0
    assert axes[2] == 0.0


def test_axis_is_odd_and_monotone():
    xs = np.linspace(-0.4, 0.4, 81)
    values = [axis_values(sample(0.0, x, 0, 0), CAL, CFG)[0] for x in xs]
    for x, v in zip(xs, values):
        neg = axis_values(sample(0.0, -x, 0, 0), CAL, CFG)[0]
        assert neg == -v
        if abs(x) < CFG.deadband:
            assert v == 0.0
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_vertical_axis_uses_z():
    axes = axis_values(sample(0.0, 0, 0, -0.25), CAL, CFG)
    assert axes[2] == -1.0


def test_lateral_axis_respects_facing():
    cal = GestureCalibration(np.zeros(3), np.array([0.0, 1.0]))  # facing +y
    axes = axis_values(sample(0.0, -0.25, 0, 0), cal, CFG)  # operator's left
    assert axes[0] == 0.0
    assert axes[1] == 1.0


# ---------------------------------------------------------------------------
# decimate


def test_one_second_trace_yields_ten_frames():
    samples = [sample(i / 270.0, 0, 0, 0) for i in range(270)]
    frames = decimate(samples, CAL, CFG)
    assert len(frames) == 10
    assert [f.seq for f in frames] == list(range(10))


def test_neutral_trace_is_all_zero():
    samples = [sample(i / 270.0, 0, 0, 0, grip=0.0) for i in range(270)]
    for f in decimate(samples, CAL, CFG):
        assert (f.grow_axis, f.lr_axis, f.ud_axis, f.grip) == (0, 0, 0, 0)


def test_window_mean_saturates_despite_jitter():
    rng = np.random.default_rng(9)
    jitter = rng.uniform(-0.02, 0.02, size=27)
    jitter -= jitter.mean()  # window mean is exactly 0.25 forward
    samples = [sample(i / 270.0, 0.25 + jitter[i], 0, 0) for i in range(27)]
    frames = decimate(samples, CAL, CFG)
    assert len(frames) == 1
    assert frames[0].grow_axis == 1.0


def test_empty_windows_repeat_previous_frame():
    samples = [sample(i / 270.0, 0.15, 0, 0) for i in range(27)]
    samples.append(sample(0.35, 0.15, 0, 0))   # window 1 and 2 get one late gap
    samples.append(sample(0.61, 0.0, 0, 0))    # window 5
    frames = decimate(samples, CAL, CFG)
    assert len(frames) == 7
    assert frames[0].grow_axis == pytest.approx(0.5)
    assert frames[1].grow_axis == pytest.approx(0.5)   # empty: repeats
    assert frames[3].grow_axis == pytest.approx(0.5)   # window 3 holds the 0.35 s sample
    assert frames[4].grow_axis == pytest.approx(0.5)   # empty: repeats
    assert frames[6].grow_axis == 0.0


def test_decimate_rejects_unordered_samples():
    samples = [sample(0.1, 0, 0, 0), sample(0.05, 0, 0, 0)]
    with pytest.raises(ValueError):
        decimate(samples, CAL, CFG)


def test_frame_count_follows_duration():
    for n in (27, 54, 135, 271, 2700):
        samples = [sample(i / 270.0, 0, 0, 0) for i in range(n)]
        frames = decimate(samples, CAL, CFG)
        assert len(frames) == math.floor((n - 1) / 27) + 1


def test_decimate_deterministic():
    rng = np.random.default_rng(17)
    samples = [sample(i / 270.0, *rng.uniform(-0.3, 0.3, 3)) for i in range(540)]
    a = decimate(samples, CAL, CFG)
    b = decimate(samples, CAL, CFG)
    assert frames_bytes(a) == frames_bytes(b)


# ---------------------------------------------------------------------------
# frame independence


def transform_trace(samples, cal, angle, translation):
    c, s = math.cos(angle), math.sin(angle)

    def rot3(p):
        return np.array([c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])

    moved = [HandSample(smp.t, rot3(smp.position) + translation, smp.grip)
             for smp in samples]
    fwd = cal.forward
    new_cal = GestureCalibration(rot3(cal.neutral) + translation,
                                 np.array([c * fwd[0] - s * fwd[1],
                                           s * fwd[0] + c * fwd[1]]))
    return moved, new_cal


def test_frame_independence_random_transforms():
    rng = np.random.default_rng(29)
    for _ in range(30):
        neutral = rng.uniform(-1, 1, 3)
        theta = rng.uniform(0, 2 * math.pi)
        cal = GestureCalibration(neutral, np.array([math.cos(theta), math.sin(theta)]))
        samples = [HandSample(i / 270.0, neutral + rng.uniform(-0.35, 0.35, 3),
                              rng.uniform(0, 1)) for i in range(81)]
        reference = frames_bytes(decimate(samples, cal, CFG))
        for _ in range(10):
            angle = rng.uniform(0, 2 * math.pi)
            translation = np.append(rng.uniform(-5, 5, 2), rng.uniform(-1, 1))
            moved, new_cal = transform_trace(samples, cal, angle, translation)
            assert frames_bytes(decimate(moved, new_cal, CFG)) == reference


# ---------------------------------------------------------------------------
# trace files


def test_trace_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    cal = GestureCalibration(rng.normal(size=3), np.array([0.0, 1.0]))
    samples = [HandSample(i / 270.0 + 1e-9 * rng.random(),
                          rng.normal(size=3), rng.uniform(0, 1))
               for i in range(100)]
    path = tmp_path / "trace.jsonl"
    assert write_trace(path, cal, samples) == 100
    cal2, samples2 = read_trace(path)
    assert cal2.neutral.tolist() == cal.neutral.tolist()
    assert cal2.forward.tolist() == cal.forward.tolist()
    assert len(samples2) == len(samples)
    for a, b in zip(samples, samples2):
        assert a.t == b.t
        assert a.position.tolist() == b.position.tolist()
        assert a.grip == b.grip


def test_trace_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"cal":{"neutral":[0,0,0],"forward":[1,0]}}\n{"t":0.0}\n')
    with pytest.raises(TraceError) as err:
        read_trace(path)
    assert err.value.line_number == 2
    path.write_text('{"t":0.0,"p":[0,0,0],"grip":0}\n')
    with pytest.raises(TraceError):
        read_trace(path)


def test_grip_clamped_on_load(tmp_path):
    path = tmp_path / "clamp.jsonl"
    path.write_text('{"cal":{"neutral":[0,0,0],"forward":[1,0]}}\n'
                    '{"t":0.0,"p":[0,0,0],"grip":1.6}\n')
    _, samples = read_trace(path)
    assert samples[0].grip == 1.0
