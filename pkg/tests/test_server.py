"""Live WebSocket session tests: protocol, recording, replay equivalence."""
import json
import time

import numpy as np
import pytest
from jsonschema import validate
from websockets.sync.client import connect

from vineteleop.gestures import GestureCalibration, GestureConfig, displacement_for_axes
from vineteleop.protocol import CLIENT_SCHEMAS, SERVER_SCHEMAS, encode
from vineteleop.server import SessionServer
from vineteleop.session import SessionConfig, run_replay_detailed

NEUTRAL = np.array([0.0, 0.0, 1.0])


def scenario_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps({
        "robot": {"base": [0.0, 0.0, 0.6]},
        "blocks": [{"id": 1, "center": [0.0, 0.0, 0.025]}],
        "danger_zones": [{"center": [0.4, 0.4, 0.3], "radius": 0.1}],
        "tower_base": [0.0, -0.15],
        "floor_z": 0.0,
    }))
    return str(path)


def live_cfg(tmp_path, **kw):
    kw.setdefault("port", 0)
    return SessionConfig(mode="live", host="127.0.0.1",
                         scenario=scenario_file(tmp_path), **kw)


def hand(t, p, grip=0.0):
    return {"type": "hand", "t": t, "p": [float(v) for v in p], "grip": grip}


def precal_messages():
    return [hand(-0.2 + i / 270.0, NEUTRAL) for i in range(54)]


def windows_to_messages(windows, cfg=GestureConfig()):
    """One wire message per sample for scripted 0.1 s command windows."""
    cal = GestureCalibration(NEUTRAL, np.array([1.0, 0.0]))
    msgs = []
    for k, (grow, lr, ud, grip) in enumerate(windows):
        pos = displacement_for_axes(grow, lr, ud, cal, cfg)
        for i in range(27):
            msgs.append(hand((k * 27 + i) / 270.0, pos, grip))
    return msgs


class LiveClient:
    """Synchronous test client; recv-with-timeout keeps things simple."""

    def __init__(self, port):
        self.ws = connect(f"ws://127.0.0.1:{port}", compression=None)
        self.received = []
        self.errors = []

    def close(self):
        self.ws.close()

    def send(self, message: dict):
        self.ws.send(encode(message))

    def _pump(self, timeout=0.05):
        try:
            raw = self.ws.recv(timeout=timeout)
        except TimeoutError:
            return None
        msg = json.loads(raw)
        self.received.append(msg)
        if msg["type"] == "error":
            self.errors.append(msg)
        return msg

    def flush(self, timeout=10.0):
        """Probe with a bad message; its error reply proves all prior ones ran."""
        marker = len(self.errors)
        self.ws.send(json.dumps({"type": "nonsense"}))
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            self._pump()
            if len(self.errors) > marker:
                return
        raise TimeoutError("server never answered the probe message")

    def wait_state(self, predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            self._pump()
            for msg in reversed(self.received):
                if msg["type"] == "state" and predicate(msg):
                    return msg
        raise TimeoutError("no state update matched the predicate")


@pytest.fixture
def server_factory(tmp_path):
    servers = []

    def make(record_path=None, **cfg_kw):
        server = SessionServer(live_cfg(tmp_path, **cfg_kw), record_path)
        server.start()
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.shutdown()


# ---------------------------------------------------------------------------


def test_calibrate_then_neutral_shows_motionless_robot(server_factory):
    server = server_factory()
    client = LiveClient(server.port)
    try:
        for msg in precal_messages():
            client.send(msg)
        client.send({"type": "calibrate", "facing": [1.0, 0.0]})
        for i in range(270):
            client.send(hand(i / 270.0, NEUTRAL))
        client.flush()
        state = client.wait_state(lambda s: s["phase"] == "reach")
        assert state["cmd"] == {"grow": 0.0, "lr": 0.0, "ud": 0.0, "grip": 0.0}
        first = state["backbone"][0]
        assert all(abs(a - b) < 1e-9 for p in state["backbone"]
                   for a, b in zip(p, first))  # zero length: all points at base
    finally:
        client.close()


def test_malformed_messages_get_error_frames_and_session_survives(server_factory):
    server = server_factory()
    client = LiveClient(server.port)
    try:
        client.ws.send("this is not json")
        client.ws.send(json.dumps({"no_type": 1}))
        client.ws.send(json.dumps({"type": "hand"}))  # missing fields
        deadline = time.monotonic() + 5.0
        while len(client.errors) < 3 and time.monotonic() < deadline:
            client._pump()
        assert len(client.errors) >= 3
        client.wait_state(lambda s: True)  # still broadcasting
    finally:
        client.close()


def test_second_client_is_turned_away(server_factory):
    server = server_factory()
    first = LiveClient(server.port)
    try:
        first.wait_state(lambda s: True)
        second = connect(f"ws://127.0.0.1:{server.port}", compression=None)
        msg = json.loads(second.recv(timeout=5.0))
        assert msg["type"] == "error"
        second.close()
    finally:
        first.close()


def test_saturated_forward_input_drives_grow_axis_to_one(server_factory):
    server = server_factory()
    client = LiveClient(server.port)
    try:
        for msg in precal_messages():
            client.send(msg)
        client.send({"type": "calibrate", "facing": [1.0, 0.0]})
        beyond = NEUTRAL + np.array([0.4, 0.0, 0.0])  # far past saturation
        for i in range(135):
            client.send(hand(i / 270.0, beyond))
        client.flush()
        state = client.wait_state(lambda s: s["cmd"]["grow"] == 1.0)
        assert state["cmd"]["grow"] == 1.0
    finally:
        client.close()


def test_record_then_replay_reproduces_live_session(server_factory, tmp_path):
    record = tmp_path / "session.jsonl"
    windows = []
    windows += [(1.0, 0.0, 0.0, 0.0)] * 53   # grow down to the block
    windows += [(0.0, 0.0, 0.0, 1.0)] * 6    # close: grasp
    windows += [(-1.0, 0.0, 0.0, 1.0)] * 10  # carry it up
    windows += [(0.0, 0.0, 0.0, 0.0)] * 6    # open: drop it
    windows += [(0.0, 0.0, 0.0, 0.0)] * 5

    server = server_factory(record_path=str(record))
    client = LiveClient(server.port)
    try:
        for msg in precal_messages():
            client.send(msg)
        client.send({"type": "calibrate", "facing": [1.0, 0.0]})
        for msg in windows_to_messages(windows):
            client.send(msg)
        client.flush(timeout=30.0)
    finally:
        client.close()
    live_report = server.shutdown()
    assert live_report is not None
    assert record.exists()
    assert not (tmp_path / "session.jsonl.partial").exists()
    assert live_report.events  # the session actually did something

    replay_cfg = SessionConfig(mode="replay", scenario=server.cfg.scenario)
    replay_report, _ = run_replay_detailed(replay_cfg, record)
    assert replay_report.final_height == live_report.final_height
    assert replay_report.phase_log() == live_report.phase_log()
    assert replay_report.frames_sent == live_report.frames_sent
    assert replay_report.to_json() == live_report.to_json()


def test_live_messages_conform_to_schema(server_factory):
    server = server_factory()
    client = LiveClient(server.port)
    outbound = []
    try:
        msgs = precal_messages() + [{"type": "calibrate", "facing": [1.0, 0.0]}]
        msgs += [hand(i / 270.0, NEUTRAL + [0.1, 0, 0], grip=0.5)
                 for i in range(54)]
        for msg in msgs:
            outbound.append(msg)
            client.send(msg)
        client.flush()
        client.wait_state(lambda s: s["phase"] != "idle")
    finally:
        client.close()
    for msg in outbound:
        validate(msg, CLIENT_SCHEMAS[msg["type"]])
    states = [m for m in client.received if m["type"] == "state"]
    assert states, "expected at least one state broadcast"
    for msg in client.received:
        validate(msg, SERVER_SCHEMAS[msg["type"]])
    assert len(client.errors) >= 1  # the flush probe


def test_broadcast_liveness(server_factory):
    server = server_factory()
    client = LiveClient(server.port)
    try:
        client.wait_state(lambda s: True)
        count_before = sum(1 for m in client.received if m["type"] == "state")
        deadline = time.monotonic() + 2.0 / server.cfg.perception_rate
        while time.monotonic() < deadline:
            client._pump(timeout=0.01)
        count_after = sum(1 for m in client.received if m["type"] == "state")
        assert count_after > count_before
    finally:
        client.close()


def test_bind_failure_raises(tmp_path):
    server = SessionServer(live_cfg(tmp_path))
    try:
        with pytest.raises(OSError):
            SessionServer(live_cfg(tmp_path, port=server.port))
    finally:
        server.shutdown()
