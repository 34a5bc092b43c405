"""Wire protocol v1: UTF-8 JSON text messages, one object per message.

Client to server:
    {"type": "hand", "t": <s>, "p": [x, y, z], "grip": <0..1>}
    {"type": "calibrate", "facing": [fx, fy]}

Server to client (always carry "v": 1):
    {"type": "state", "v": 1, "t": ..., "backbone": [[x,y,z], ...],
     "blocks": [{"id": n, "p": [x,y,z], "state": "..."}],
     "cue": {"dir": [x,y,z], "grip": g}, "phase": "...", "tower": n,
     "danger_margin": m | null, "cmd": {"grow": a, "lr": a, "ud": a, "grip": g}}
    {"type": "report", "v": 1, "report": {...session summary...}}
    {"type": "error", "v": 1, "msg": "..."}

Client messages may carry "v"; when present it must be 1. The JSON Schemas
below are the normative definition (docs/protocol.md walks through them).
"""
from __future__ import annotations

import json

import numpy as np

from .gestures import HandSample

PROTOCOL_VERSION = 1

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_VEC2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_V_OPTIONAL = {"const": PROTOCOL_VERSION}

CLIENT_SCHEMAS = {
    "hand": {
        "type": "object",
        "properties": {
            "type": {"const": "hand"},
            "v": _V_OPTIONAL,
            "t": {"type": "number"},
            "p": _VEC3,
            "grip": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "required": ["type", "t", "p", "grip"],
        "additionalProperties": False,
    },
    "calibrate": {
        "type": "object",
        "properties": {
            "type": {"const": "calibrate"},
            "v": _V_OPTIONAL,
            "facing": _VEC2,
        },
        "required": ["type", "facing"],
        "additionalProperties": False,
    },
}

SERVER_SCHEMAS = {
    "state": {
        "type": "object",
        "properties": {
            "type": {"const": "state"},
            "v": {"const": PROTOCOL_VERSION},
            "t": {"type": "number"},
            "backbone": {"type": "array", "items": _VEC3, "minItems": 2},
            "blocks": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "id": {"type": "integer"},
                        "p": _VEC3,
                        "state": {"type": "string"},
                    },
                    "required": ["id", "p", "state"],
                    "additionalProperties": False,
                },
            },
            "cue": {
                "type": "object",
                "properties": {
                    "dir": _VEC3,
                    "grip": {"type": "number", "minimum": -1, "maximum": 1},
                },
                "required": ["dir", "grip"],
                "additionalProperties": False,
            },
            "phase": {"type": "string"},
            "tower": {"type": "integer", "minimum": 0},
            "danger_margin": {"type": ["number", "null"]},
            "cmd": {
                "type": "object",
                "properties": {
                    "grow": {"type": "number", "minimum": -1, "maximum": 1},
                    "lr": {"type": "number", "minimum": -1, "maximum": 1},
                    "ud": {"type": "number", "minimum": -1, "maximum": 1},
                    "grip": {"type": "number", "minimum": 0, "maximum": 1},
                },
                "required": ["grow", "lr", "ud", "grip"],
                "additionalProperties": False,
            },
        },
        "required": ["type", "v", "t", "backbone", "blocks", "cue", "phase",
                     "tower", "danger_margin", "cmd"],
        "additionalProperties": False,
    },
    "report": {
        "type": "object",
        "properties": {
            "type": {"const": "report"},
            "v": {"const": PROTOCOL_VERSION},
            "report": {
                "type": "object",
                "properties": {
                    "duration": {"type": "number"},
                    "frames_sent": {"type": "integer"},
                    "final_height": {"type": "integer"},
                    "success": {"type": "boolean"},
                    "min_danger_margin": {"type": ["number", "null"]},
                    "events": {"type": "array", "items": {"type": "object"}},
                },
                "required": ["duration", "frames_sent", "final_height",
                             "success", "min_danger_margin", "events"],
                "additionalProperties": False,
            },
        },
        "required": ["type", "v", "report"],
        "additionalProperties": False,
    },
    "error": {
        "type": "object",
        "properties": {
            "type": {"const": "error"},
            "v": {"const": PROTOCOL_VERSION},
            "msg": {"type": "string"},
        },
        "required": ["type", "v", "msg"],
        "additionalProperties": False,
    },
}


class ProtocolError(ValueError):
    pass


def encode(message: dict) -> str:
    return json.dumps(message, separators=(",", ":"), allow_nan=False)


def error_message(msg: str) -> dict:
    return {"type": "error", "v": PROTOCOL_VERSION, "msg": msg}


def report_message(report) -> dict:
    return {"type": "report", "v": PROTOCOL_VERSION,
            "report": json.loads(report.to_json())}


def parse_client_message(raw: str) -> dict:
    """Decode and structurally check one inbound client message."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "type" not in obj:
        raise ProtocolError("message must be an object with a 'type' field")
    if obj.get("v", PROTOCOL_VERSION) != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {obj.get('v')}")
    kind = obj["type"]
    if kind == "hand":
        try:
            p = obj["p"]
            if not (isinstance(p, list) and len(p) == 3):
                raise ProtocolError("'p' must be [x, y, z]")
            return obj
        except KeyError as exc:
            raise ProtocolError(f"hand message missing {exc}") from exc
    if kind == "calibrate":
        facing = obj.get("facing")
        if not (isinstance(facing, list) and len(facing) == 2):
            raise ProtocolError("calibrate message needs 'facing': [fx, fy]")
        return obj
    raise ProtocolError(f"unknown message type {kind!r}")


def hand_sample_from_message(obj: dict) -> HandSample:
    try:
        return HandSample(float(obj["t"]), np.array(obj["p"], dtype=float),
                          float(obj["grip"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad hand sample: {exc}") from exc
