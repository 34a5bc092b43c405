"""Live operator session over a WebSocket, with optional trace recording.

One operator client at a time streams hand samples with its own timestamps;
those timestamps drive the simulation clock exactly as in replay, so a
recorded session replays to the identical outcome. The wall clock only paces
the outbound state broadcast (fixed-timestep accumulator at the perception
rate, with drift correction after stalls).

The transport is the thread-based WebSocket implementation: one handler
thread per connection plus one broadcast thread, sharing the session under a
lock. Blocking sockets sustain dense sample streams that event-loop readiness
handling in this environment does not.
"""
from __future__ import annotations

import math
import os
import threading
import time
from collections import deque

import numpy as np
from websockets.exceptions import ConnectionClosed
from websockets.sync.server import serve

from .gestures import GestureCalibration, calibrate, format_calibration, format_sample
from .protocol import (
    ProtocolError,
    encode,
    error_message,
    hand_sample_from_message,
    parse_client_message,
    report_message,
)
from .session import SessionConfig, SessionEngine, initial_state_message
from .world import load_scenario

CALIBRATION_WINDOW_S = 0.1


class TraceRecorder:
    """Appends the session input to `<path>.partial`, renamed on clean close.

    A leftover .partial file is the marker of an aborted recording.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        self.partial = self.path + ".partial"
        self._fh = None

    def start(self, cal: GestureCalibration) -> None:
        self._fh = open(self.partial, "w", encoding="utf-8")
        self._fh.write(format_calibration(cal) + "\n")

    def append(self, sample) -> None:
        if self._fh is not None:
            self._fh.write(format_sample(sample) + "\n")

    def close(self) -> None:
        if self._fh is None:
            return
        self._fh.close()
        self._fh = None
        os.replace(self.partial, self.path)

    def abort(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class LiveSession:
    """Protocol handling and engine state for one operator session."""

    def __init__(self, cfg: SessionConfig, record_path=None):
        self.cfg = cfg
        self.world = load_scenario(cfg.scenario_source())
        self.engine: SessionEngine | None = None
        self.recorder = TraceRecorder(record_path) if record_path else None
        self.prebuffer: deque = deque(maxlen=4096)
        self.report_sent = False
        self.client = None
        self.final_report = None

    def state_message(self) -> dict:
        if self.engine is not None:
            state = self.engine.latest_state()
            if state is not None:
                return state
            return self.engine.idle_state()
        return initial_state_message(self.world, self.cfg.backbone_samples)

    def _calibrate(self, facing) -> list[dict]:
        if self.engine is not None and self.engine.samples_seen > 0:
            return [error_message("session already calibrated and running")]
        facing = np.asarray(facing, dtype=float)
        norm = float(np.hypot(facing[0], facing[1]))
        if not (math.isfinite(norm) and norm > 1e-9):
            return [error_message("facing vector must be non-zero")]
        facing = facing / norm
        if not self.prebuffer:
            return [error_message("no buffered samples to calibrate from")]
        newest = self.prebuffer[-1].t
        recent = [s for s in self.prebuffer if s.t >= newest - CALIBRATION_WINDOW_S]
        if len(recent) < 27:
            recent = list(self.prebuffer)[-27:]
        try:
            cal = calibrate(recent, facing)
        except ValueError as exc:
            return [error_message(str(exc))]
        self.engine = SessionEngine(self.cfg, self.world, cal)
        if self.recorder is not None:
            self.recorder.start(cal)
        return []

    def _ingest(self, message: dict) -> list[dict]:
        try:
            sample = hand_sample_from_message(message)
        except ProtocolError as exc:
            return [error_message(str(exc))]
        if self.engine is None:
            self.prebuffer.append(sample)
            return []
        try:
            self.engine.ingest(sample)
        except (ValueError, RuntimeError) as exc:
            return [error_message(str(exc))]
        if self.recorder is not None:
            self.recorder.append(sample)
        out: list[dict] = []
        if self.engine.goal_reached and not self.report_sent:
            self.report_sent = True
            out.append(report_message(self.engine.snapshot_report()))
        return out

    def handle(self, raw: str) -> list[dict]:
        """Process one inbound message; returns messages to send back."""
        try:
            message = parse_client_message(raw)
        except ProtocolError as exc:
            return [error_message(str(exc))]
        if message["type"] == "calibrate":
            return self._calibrate(message["facing"])
        return self._ingest(message)

    def finish(self):
        """Finalize the engine (if any) and seal the recording."""
        if self.engine is not None and not self.engine.finished:
            self.final_report = self.engine.finalize()
        if self.recorder is not None:
            self.recorder.close()
        return self.final_report


class SessionServer:
    """Threaded WebSocket front end around one LiveSession.

    Binds eagerly (construction raises OSError on an unusable endpoint).
    """

    def __init__(self, cfg: SessionConfig, record_path=None):
        self.cfg = cfg
        self.session = LiveSession(cfg, record_path)
        self._lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._stop = threading.Event()
        self._server = serve(self._handler, cfg.host, cfg.port, compression=None)
        self.port = self._server.socket.getsockname()[1]
        self._threads: list[threading.Thread] = []

    # -- connection handling -------------------------------------------------

    def _send(self, ws, message: dict) -> None:
        try:
            with self._send_lock:
                ws.send(encode(message))
        except (ConnectionClosed, OSError):
            pass  # the recv loop notices and cleans up

    def _handler(self, ws) -> None:
        with self._lock:
            if self.session.client is not None:
                occupied = True
            else:
                occupied = False
                self.session.client = ws
        if occupied:
            self._send(ws, error_message("session already has an operator"))
            ws.close()
            return
        self._send(ws, self.session.state_message())
        try:
            for raw in ws:
                with self._lock:
                    replies = self.session.handle(raw)
                for reply in replies:
                    self._send(ws, reply)
        except ConnectionClosed:
            pass
        finally:
            with self._lock:
                self.session.client = None  # pause until the operator returns

    def _broadcast_loop(self) -> None:
        period = 1.0 / self.cfg.perception_rate
        next_at = time.monotonic() + period
        while not self._stop.is_set():
            delay = next_at - time.monotonic()
            if delay > 0:
                self._stop.wait(delay)
            next_at += period
            if next_at < time.monotonic() - 5 * period:  # resync after a stall
                next_at = time.monotonic() + period
            with self._lock:
                ws = self.session.client
                message = self.session.state_message() if ws is not None else None
            if ws is not None and message is not None:
                self._send(ws, message)

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        """Serve in background threads; returns once accepting connections."""
        accept = threading.Thread(target=self._server.serve_forever,
                                  name="ws-accept", daemon=True)
        cast = threading.Thread(target=self._broadcast_loop,
                                name="ws-broadcast", daemon=True)
        accept.start()
        cast.start()
        self._threads = [accept, cast]

    def serve_forever(self) -> None:
        """Serve on the calling thread until interrupted."""
        cast = threading.Thread(target=self._broadcast_loop,
                                name="ws-broadcast", daemon=True)
        cast.start()
        self._threads = [cast]
        try:
            self._server.serve_forever()
        finally:
            self.shutdown()

    def shutdown(self):
        """Stop serving, finalize the session, seal any recording."""
        if self._stop.is_set():
            return self.session.final_report
        self._stop.set()
        self._server.shutdown()
        for thread in self._threads:
            if thread is not threading.current_thread():
                thread.join(timeout=2.0)
        with self._lock:
            return self.session.finish()
