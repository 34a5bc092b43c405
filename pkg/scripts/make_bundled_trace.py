#!/usr/bin/env python3
"""Regenerate the bundled scripted trace from the default scenario.

Run from the repository root after changing the scenario, the gesture mapping
constants, or the scripted operator:

    python3 scripts/make_bundled_trace.py
"""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from vineteleop.autopilot import build_script_trace
from vineteleop.gestures import write_trace
from vineteleop.session import DEFAULT_SCENARIO, TOWER3_TRACE, bundled_path


def main():
    cal, samples = build_script_trace(bundled_path(DEFAULT_SCENARIO))
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "vineteleop" \
        / "data" / TOWER3_TRACE
    count = write_trace(out, cal, samples)
    print(f"wrote {count} samples ({count / 270.0:.1f} s) to {out}")


if __name__ == "__main__":
    main()
