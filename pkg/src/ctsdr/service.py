"""Streaming teleoperation sessions over newline-delimited JSON.

The protocol logic is plain functions over a Session object so tests can
drive it without sockets; create_app wraps the same functions in a FastAPI
WebSocket endpoint. Messages are versioned with a "v" field and every
outbound message carries a gapless per-session sequence number.

Inbound kinds: jog, set_spindle, load_scenario, start, stop, reset.
Outbound kinds: state, event, metrics, projection.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import replace

import numpy as np

from .analysis import run_summary
from .model import JointState, RobotConfig, default_config, load_config
from .phantom import VoxelPhantom, project
from .simulator import Command, DrillSimulator, ScriptRunner, builtin_scenarios, scenario_by_name

PROTOCOL_VERSION = 1
TICK_RATE_HZ = 50.0
SUBSTEPS_PER_TICK = 2
SUBSTEP_DT = 1.0 / (TICK_RATE_HZ * SUBSTEPS_PER_TICK)
PROJECTION_EVERY_TICKS = 25  # 2 Hz at the 50 Hz tick rate
PROJECTION_AXES = ("z", "y")  # top view, side view

_RATE_KEYS = ("outer_translation", "inner_translation", "outer_roll", "inner_roll")


def encode_message(msg: dict) -> str:
    """One wire line, compact separators, insertion key order."""
    return json.dumps(msg, separators=(",", ":"))


def decode_message(line: str) -> dict | None:
    """Parse one wire line; None when it is not a JSON object."""
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, ValueError):
        return None
    return msg if isinstance(msg, dict) else None


class Session:
    """One simulator timeline plus protocol state for a single client.

    Modes: idle (robot holds position), jogging (velocity targets applied
    each tick), scripted (a ScriptRunner owns the simulator), faulted
    (everything but reset is rejected).
    """

    def __init__(self, session_id: str, config: RobotConfig | None = None,
                 phantom: VoxelPhantom | None = None):
        self.id = session_id
        self.config = config if config is not None else default_config()
        self.phantom = phantom
        self.mode = "idle"
        self.sim = DrillSimulator(self.config, phantom=phantom)
        self.seq = 0
        self.tick_count = 0
        self.jog_rates = {key: 0.0 for key in _RATE_KEYS}
        self.spindle_target = 0.0
        self.loaded = None  # ScenarioScript
        self.runner = None  # ScriptRunner while scripted
        self._event_cursor = 0
        self._last_projection: dict[str, np.ndarray] = {}

    # -- outbound message builders -------------------------------------------

    def _next_seq(self) -> int:
        seq = self.seq
        self.seq += 1
        return seq

    def _head(self, kind: str, t: float | None = None) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "kind": kind,
            "seq": self._next_seq(),
            "t": self.sim.t if t is None else t,
        }

    def hello(self) -> dict:
        """Connection greeting: advertised limits and available scenarios."""
        limits = self.config.joint_limits
        msg = self._head("event")
        msg.update({
            "event": "connected",
            "session": self.id,
            "limits": {
                "max_translation_speed": limits.max_translation_speed,
                "max_roll_speed": limits.max_roll_speed,
                "feed_limit": self.config.feed_limit,
                "spindle_max": self.config.spindle_max,
            },
            "scenarios": [s.name for s in builtin_scenarios(self.config)],
        })
        return msg

    def state_message(self) -> dict:
        j = self.sim.joints
        msg = self._head("state")
        msg.update({
            "mode": self.mode,
            "joints": {
                "outer_translation": j.outer_translation,
                "inner_translation": j.inner_translation,
                "outer_roll": j.outer_roll,
                "inner_roll": j.inner_roll,
            },
            "spindle": j.spindle,
            "tip": [float(v) for v in self.sim.tip],
            "faulted": self.sim.faulted,
        })
        return msg

    def _reject(self, reason: str) -> dict:
        msg = self._head("event")
        msg.update({"event": "rejected", "reason": reason})
        return msg

    def _simple_event(self, name: str, **extra) -> dict:
        msg = self._head("event")
        msg["event"] = name
        msg.update(extra)
        return msg

    def _drain_events(self) -> list[dict]:
        """Forward simulator events recorded since the last drain."""
        out = []
        events = self.sim.events
        while self._event_cursor < len(events):
            ev = events[self._event_cursor]
            self._event_cursor += 1
            msg = self._head("event", t=ev.t)
            msg["event"] = ev.kind
            msg.update(ev.detail)
            out.append(msg)
        return out

    def _adopt_sim(self, sim: DrillSimulator):
        """Switch the active simulator, resetting the event cursor."""
        self.sim = sim
        self._event_cursor = len(sim.events)


def handle_message(session: Session, msg: dict | None) -> list[dict]:
    """Apply one inbound message; returns the direct replies.

    State broadcasts are not replies; they come from tick(). The session is
    mutated in place.
    """
    if msg is None or "kind" not in msg:
        return [session._reject("malformed message")]
    if msg.get("v") != PROTOCOL_VERSION:
        return [session._reject(f"unsupported protocol version {msg.get('v')!r}")]
    kind = msg["kind"]

    if session.mode == "faulted" and kind != "reset":
        return [session._reject("faulted; reset required")]

    if kind == "jog":
        if session.mode == "scripted":
            return [session._reject("scripted run in progress")]
        rates = msg.get("rates", {})
        if not isinstance(rates, dict):
            return [session._reject("rates must be an object")]
        unknown = sorted(set(rates) - set(_RATE_KEYS))
        if unknown:
            return [session._reject(f"unknown rate keys: {', '.join(unknown)}")]
        try:
            session.jog_rates = {key: float(rates.get(key, 0.0)) for key in _RATE_KEYS}
        except (TypeError, ValueError):
            return [session._reject("rates must be numbers")]
        session.mode = "jogging"
        return []

    if kind == "set_spindle":
        if session.mode == "scripted":
            return [session._reject("scripted run in progress")]
        try:
            rpm = float(msg["rpm"])
        except (KeyError, TypeError, ValueError):
            return [session._reject("set_spindle requires a numeric rpm")]
        rpm = min(max(rpm, 0.0), session.config.spindle_max)
        session.spindle_target = rpm
        session.sim.joints = replace(session.sim.joints, spindle=rpm)
        return []

    if kind == "load_scenario":
        if session.mode == "scripted":
            return [session._reject("scripted run in progress")]
        name = msg.get("name")
        try:
            script = scenario_by_name(name, session.config)
        except KeyError as exc:
            return [session._reject(str(exc.args[0]))]
        session.loaded = script
        return [session._simple_event(
            "scenario_loaded", scenario=script.name,
            phases=[p.label for p in script.phases])]

    if kind == "start":
        if session.mode == "scripted":
            return [session._reject("scripted run in progress")]
        if session.loaded is None:
            return [session._reject("no scenario loaded")]
        replies = session._drain_events()
        session.runner = ScriptRunner(session.loaded, session.config,
                                      phantom=session.phantom, dt=SUBSTEP_DT)
        session._adopt_sim(session.runner.sim)
        session._event_cursor = 0
        session.jog_rates = {key: 0.0 for key in _RATE_KEYS}
        session.mode = "scripted"
        replies.append(session._simple_event("script_start", scenario=session.loaded.name))
        return replies

    if kind == "stop":
        replies = session._drain_events()
        if session.mode == "scripted":
            session.runner = None
            session.mode = "idle"
            replies.append(session._simple_event("script_stop", completed=False))
        else:
            session.mode = "idle"
            replies.append(session._simple_event("stopped"))
        session.jog_rates = {key: 0.0 for key in _RATE_KEYS}
        return replies

    if kind == "reset":
        if session.phantom is not None:
            session.phantom.reset()
        session._adopt_sim(DrillSimulator(session.config, phantom=session.phantom))
        session._event_cursor = 0
        session.runner = None
        session.mode = "idle"
        session.jog_rates = {key: 0.0 for key in _RATE_KEYS}
        session.spindle_target = 0.0
        session._last_projection.clear()
        return [session._simple_event("reset")]

    return [session._reject(f"unknown kind '{kind}'")]


def _metrics_message(session: Session) -> dict:
    """Post-run summary: split geometry plus the cross-section report."""
    record = session.runner.record()
    msg = session._head("metrics")
    msg.update(run_summary(record))
    return msg


def _projection_messages(session: Session) -> list[dict]:
    """Changed-region tiles per axis; the first frame per axis is full."""
    out = []
    for axis in PROJECTION_AXES:
        image = project(session.phantom, axis)
        last = session._last_projection.get(axis)
        if last is None:
            y0, y1, x0, x1 = 0, image.shape[0], 0, image.shape[1]
        else:
            changed = image != last
            if not changed.any():
                continue
            rows = np.flatnonzero(changed.any(axis=1))
            cols = np.flatnonzero(changed.any(axis=0))
            y0, y1 = int(rows[0]), int(rows[-1]) + 1
            x0, x1 = int(cols[0]), int(cols[-1]) + 1
        session._last_projection[axis] = image
        tile = image[y0:y1, x0:x1]
        msg = session._head("projection")
        msg.update({
            "axis": axis,
            "x": x0,
            "y": y0,
            "width": x1 - x0,
            "height": y1 - y0,
            "full_width": image.shape[1],
            "full_height": image.shape[0],
            "data": base64.b64encode(tile.tobytes()).decode("ascii"),
        })
        out.append(msg)
    return out


def tick(session: Session) -> list[dict]:
    """Advance one 50 Hz tick and collect the broadcast messages.

    Order: simulator events, state, projection tiles (2 Hz), then the
    metrics message when a scripted run has just finished.
    """
    session.tick_count += 1
    finished_runner = False

    if session.mode == "jogging":
        rates = session.jog_rates
        command = Command(
            outer_rate=rates["outer_translation"],
            inner_rate=rates["inner_translation"],
            outer_roll_rate=rates["outer_roll"],
            inner_roll_rate=rates["inner_roll"],
            spindle=session.spindle_target,
            duration=SUBSTEP_DT,
        )
        for _ in range(SUBSTEPS_PER_TICK):
            session.sim.step(command, SUBSTEP_DT)
            if session.sim.faulted:
                session.mode = "faulted"
                break
    elif session.mode == "scripted":
        session.runner.step(SUBSTEPS_PER_TICK)
        if session.runner.finished:
            finished_runner = True
            session.mode = "faulted" if session.sim.faulted else "idle"

    msgs = session._drain_events()
    msgs.append(session.state_message())
    if session.phantom is not None and session.tick_count % PROJECTION_EVERY_TICKS == 1:
        msgs.extend(_projection_messages(session))
    if finished_runner:
        msgs.append(_metrics_message(session))
        session.runner = None
    return msgs


def resolve_config(path: str | None = None) -> RobotConfig:
    """Config from an explicit path, the CTSDR_CONFIG env var, or defaults."""
    if path is None:
        path = os.environ.get("CTSDR_CONFIG")
    return load_config(path) if path else default_config()


def create_app(config: RobotConfig | None = None, phantom_factory=None,
               tick_rate_hz: float = TICK_RATE_HZ):
    """FastAPI app: GET /health, GET /scenarios, WS /session/{session_id}.

    phantom_factory, when given, builds a fresh phantom per session so
    concurrent sessions drill independent blocks. FastAPI is imported here
    so the rest of the package works without the service extra installed.
    """
    import asyncio

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    if config is None:
        config = resolve_config()

    app = FastAPI(title="ctsdr teleop service")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/scenarios")
    def scenarios():
        return {
            "scenarios": [
                {
                    "name": s.name,
                    "description": s.description,
                    "phases": [p.label for p in s.phases],
                }
                for s in builtin_scenarios(config)
            ]
        }

    async def session_socket(websocket, session_id):
        await websocket.accept()
        phantom = phantom_factory() if phantom_factory is not None else None
        session = Session(session_id, config=config, phantom=phantom)
        inbox: asyncio.Queue = asyncio.Queue()

        async def reader():
            while True:
                text = await websocket.receive_text()
                for line in text.splitlines():
                    if line.strip():
                        await inbox.put(decode_message(line))

        reader_task = asyncio.create_task(reader())
        loop = asyncio.get_running_loop()
        period = 1.0 / tick_rate_hz
        try:
            await websocket.send_text(encode_message(session.hello()))
            next_tick = loop.time() + period
            while True:
                while not inbox.empty():
                    msg = inbox.get_nowait()
                    for reply in handle_message(session, msg):
                        await websocket.send_text(encode_message(reply))
                for out in tick(session):
                    await websocket.send_text(encode_message(out))
                delay = next_tick - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                next_tick += period
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            reader_task.cancel()

    # This module defers annotation evaluation, and fastapi lives in a local
    # import, so the injection types are attached as objects before the
    # route is registered.
    session_socket.__annotations__ = {"websocket": WebSocket, "session_id": str}
    app.add_api_websocket_route("/session/{session_id}", session_socket)

    return app


def serve(host: str = "127.0.0.1", port: int = 8000,
          config: RobotConfig | None = None, phantom_factory=None):
    """Run the teleop service under uvicorn (blocking)."""
    import uvicorn

    app = create_app(config=config, phantom_factory=phantom_factory)
    uvicorn.run(app, host=host, port=port, log_level="info")
