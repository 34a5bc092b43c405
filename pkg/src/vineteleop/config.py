"""Session configuration from file, environment, and command-line flags.

Precedence, lowest to highest: built-in defaults, config file sections,
VINETELEOP_* environment variables, command-line flags. The file is JSON with
one object per section:

    {
      "session":  {"command_rate": 10, "goal_height": 3, ...},
      "noise":    {"sigma_pos": 0.0, "latency": 0.0, "seed": 0},
      "gestures": {"deadband": 0.05, "saturation": 0.25},
      "guidance": {"place_radius": 0.03, "cue_deadzone": 0.01,
                   "influence_margin": 0.15, "k_rep": 0.02,
                   "approach_clearance": 0.02}
    }

Environment variables are VINETELEOP_<SECTION>_<FIELD>, e.g.
VINETELEOP_SESSION_COMMAND_RATE or VINETELEOP_NOISE_SIGMA_POS. Flags are
--<field> for session fields and --<section>-<field> for the rest. The mode
field is fixed by the chosen subcommand; guidance geometry (grasp radius and
offset, block side, floor height, tower tolerance) always comes from the
scenario file.
"""
from __future__ import annotations

import argparse
import json
import os
from dataclasses import replace

from .gestures import GestureConfig
from .guidance import GuidanceConfig
from .perception import NoiseConfig
from .session import SessionConfig

ENV_PREFIX = "VINETELEOP"

# (section, field, python type); session fields take bare flag names
FIELDS = [
    ("session", "input_rate", float),
    ("session", "command_rate", float),
    ("session", "perception_rate", float),
    ("session", "physics_step", float),
    ("session", "scenario", str),
    ("session", "goal_height", int),
    ("session", "host", str),
    ("session", "port", int),
    ("session", "backbone_samples", int),
    ("session", "seed", int),
    ("noise", "sigma_pos", float),
    ("noise", "latency", float),
    ("noise", "seed", int),
    ("gestures", "deadband", float),
    ("gestures", "saturation", float),
    ("guidance", "place_radius", float),
    ("guidance", "cue_deadzone", float),
    ("guidance", "influence_margin", float),
    ("guidance", "k_rep", float),
    ("guidance", "approach_clearance", float),
]


class ConfigError(ValueError):
    pass


def _flag_name(section: str, field: str) -> str:
    stem = field if section == "session" else f"{section}_{field}"
    return "--" + stem.replace("_", "-")


def _env_name(section: str, field: str) -> str:
    return f"{ENV_PREFIX}_{section}_{field}".upper()


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(
        "session configuration",
        "every field also honors the config file and VINETELEOP_* variables")
    for section, field, kind in FIELDS:
        group.add_argument(_flag_name(section, field), dest=f"{section}__{field}",
                           type=kind, default=None, metavar=field.upper())


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    known = {(s, f): kind for s, f, kind in FIELDS}
    sections = {s for s, _, _ in FIELDS}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold an object of sections")
    for section, body in data.items():
        if section not in sections:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for field in body:
            if (section, field) not in known:
                raise ConfigError(f"unknown key {field!r} in section {section!r}")
    return data


def _collect(file_cfg: dict, args: argparse.Namespace | None,
             environ) -> dict:
    values: dict[tuple[str, str], object] = {}
    for section, field, kind in FIELDS:
        if section in file_cfg and field in file_cfg[section]:
            raw = file_cfg[section][field]
            values[(section, field)] = None if raw is None else kind(raw)
        env_raw = environ.get(_env_name(section, field))
        if env_raw is not None:
            try:
                values[(section, field)] = kind(env_raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {_env_name(section, field)}: "
                                  f"{env_raw!r}") from exc
        if args is not None:
            flag_val = getattr(args, f"{section}__{field}", None)
            if flag_val is not None:
                values[(section, field)] = flag_val
    return values


def build_session_config(mode: str, config_path=None,
                         args: argparse.Namespace | None = None,
                         environ=os.environ) -> SessionConfig:
    """Merge all configuration sources into a validated SessionConfig."""
    file_cfg = load_config_file(config_path) if config_path else {}
    values = _collect(file_cfg, args, environ)

    def section(name):
        return {f: v for (s, f), v in values.items() if s == name}

    try:
        noise = NoiseConfig(**section("noise"))
        gestures = GestureConfig(**section("gestures"))
        guidance = replace(GuidanceConfig(), **section("guidance"))
        return SessionConfig(mode=mode, noise=noise, gestures=gestures,
                             guidance=guidance, **section("session"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
