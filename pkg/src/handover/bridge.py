"""Live teleoperation bridge: one simulation loop advancing the handover FSM
at the control rate, exposed over a WebSocket so a browser client can drag the
object while the robot tracks it.

One loop owns all state.  Client messages are queued and drained once per tick
in arrival order; every tick broadcasts a snapshot state frame.  A drag
received at tick k is reflected in the object's motion target no later than
the state frame of tick k+2.
"""

from __future__ import annotations

import asyncio
import json
import math
from dataclasses import replace

import numpy as np

from .fsm import FsmConfig, HandoverFsm, HandoverPhase, RobotState, home_pose, make_tracker
from .scene import (
    MotionScript,
    NoiseConfig,
    detect_candidates,
    get_object,
)
from .se3 import Pose, pose_to_json, rot_z
from .tracker import TrackerConfig

PROTOCOL_VERSION = 1

# Wire schema (JSON Schema) for frames the server emits; the browser client
# mirrors this file.
POSE_SCHEMA = {
    "type": "object",
    "properties": {
        "t": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "q": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
    },
    "required": ["t", "q"],
    "additionalProperties": False,
}

HELLO_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"const": "hello"},
        "version": {"const": PROTOCOL_VERSION},
        "object": {"type": "string"},
        "control_rate": {"type": "number"},
        "bounds": {
            "type": "object",
            "properties": {
                "x": {"type": "array", "items": {"type": "number"}},
                "y": {"type": "array", "items": {"type": "number"}},
                "yaw_deg": {"type": "number"},
            },
            "required": ["x", "y", "yaw_deg"],
        },
    },
    "required": ["kind", "version", "object", "control_rate", "bounds"],
    "additionalProperties": False,
}

STATE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"const": "state"},
        "tick": {"type": "integer", "minimum": 0},
        "phase": {"enum": [p.value for p in HandoverPhase]},
        "object": POSE_SCHEMA,
        "target": {
            "type": "object",
            "properties": {
                "x": {"type": "number"},
                "y": {"type": "number"},
                "yaw_deg": {"type": "number"},
            },
            "required": ["x", "y", "yaw_deg"],
        },
        "ee": POSE_SCHEMA,
        "tracked": {"oneOf": [POSE_SCHEMA, {"type": "null"}]},
        "predicted": {"oneOf": [POSE_SCHEMA, {"type": "null"}]},
        "gripper": {"enum": ["open", "closing", "closed"]},
        "successes": {"type": "integer", "minimum": 0},
        "attempts": {"type": "integer", "minimum": 0},
        "last_approach_time": {"oneOf": [{"type": "number"}, {"type": "null"}]},
    },
    "required": [
        "kind", "tick", "phase", "object", "target", "ee", "tracked",
        "predicted", "gripper", "successes", "attempts", "last_approach_time",
    ],
    "additionalProperties": False,
}

ERROR_SCHEMA = {
    "type": "object",
    "properties": {"kind": {"const": "error"}, "message": {"type": "string"}},
    "required": ["kind", "message"],
    "additionalProperties": False,
}


class Session:
    """Deterministic bridge state: scripted start pose, drag-driven motion
    target, and the closed-loop FSM.  Transport-free for testability."""

    def __init__(
        self,
        object_id: str = "box_dense",
        script: MotionScript | None = None,
        seed: int = 0,
        tracker_mode: str = "oracle",
        weights=None,
        fsm_cfg: FsmConfig | None = None,
        noise: NoiseConfig | None = None,
    ):
        self.object_id = object_id
        self.obj = get_object(object_id)
        self.script = script or MotionScript("continuous_random", seed=seed)
        self.cfg = fsm_cfg or FsmConfig()
        self.noise = replace(
            noise or NoiseConfig(),
            seed=int(np.random.default_rng([(noise or NoiseConfig()).seed, seed]).integers(2**63)),
        )
        self.seed = seed
        self.tracker_mode = tracker_mode
        self.weights = weights
        self.tick = 0
        self.successes = 0
        self.attempts = 0
        self.last_approach_time: float | None = None
        self._tracking_since: int | None = None
        self._reset_trial()
        start = self.script.start_pose()
        x, y = start.translation[0], start.translation[1]
        self.z = start.translation[2]
        self.target = [float(x), float(y), float(self.script.start_yaw_deg)]
        self.pos = [float(x), float(y), float(self.script.start_yaw_deg)]

    def _reset_trial(self):
        tracker = make_tracker(self.tracker_mode, TrackerConfig(), self.weights)
        self.fsm = HandoverFsm(self.cfg, tracker, self.obj)
        self.robot = RobotState(home_pose(), np.zeros(3))
        self._tracking_since = None

    def hello(self) -> dict:
        return {
            "kind": "hello",
            "version": PROTOCOL_VERSION,
            "object": self.object_id,
            "control_rate": self.cfg.control_rate,
            "bounds": {
                "x": list(self.script.bounds_x),
                "y": list(self.script.bounds_y),
                "yaw_deg": self.script.yaw_bound_deg,
            },
        }

    def apply_message(self, msg) -> dict | None:
        """Handle one client frame; returns an error frame for bad input."""
        if not isinstance(msg, dict) or "kind" not in msg:
            return {"kind": "error", "message": "frame must be an object with a kind"}
        kind = msg["kind"]
        if kind == "drag":
            try:
                x = float(msg["x"])
                y = float(msg["y"])
                yaw = float(msg.get("yaw", self.target[2]))
            except (KeyError, TypeError, ValueError):
                return {"kind": "error", "message": "drag needs numeric x, y"}
            if not all(math.isfinite(v) for v in (x, y, yaw)):
                return {"kind": "error", "message": "drag values must be finite"}
            self.target = [
                float(np.clip(x, *self.script.bounds_x)),
                float(np.clip(y, *self.script.bounds_y)),
                float(np.clip(yaw, -self.script.yaw_bound_deg, self.script.yaw_bound_deg)),
            ]
            return None
        if kind == "reset":
            self._reset_trial()
            start = self.script.start_pose()
            self.pos = [float(start.translation[0]), float(start.translation[1]),
                        float(self.script.start_yaw_deg)]
            self.target = list(self.pos)
            return None
        if kind == "config":
            if "prediction" in msg:
                self.fsm.prediction = bool(msg["prediction"])
            return None
        return {"kind": "error", "message": f"unknown kind {kind!r}"}

    def _advance_object(self, dt: float):
        """Low-pass the object toward the drag target under the script's
        speed limits; never leaves the bounds because the target is clamped."""
        dx = self.target[0] - self.pos[0]
        dy = self.target[1] - self.pos[1]
        dist = math.hypot(dx, dy)
        step = self.script.speed_limit * dt
        if dist > 1e-12:
            s = min(1.0, step / dist)
            self.pos[0] += dx * s
            self.pos[1] += dy * s
        dyaw = self.target[2] - self.pos[2]
        max_yaw = self.script.angular_speed_limit_deg * dt
        self.pos[2] += float(np.clip(dyaw, -max_yaw, max_yaw))

    def object_pose(self) -> Pose:
        return Pose(
            rot_z(math.radians(self.pos[2])),
            np.array([self.pos[0], self.pos[1], self.z]),
        )

    def advance(self) -> dict:
        """One control tick; returns the state frame to broadcast."""
        dt = self.cfg.dt
        before = self.object_pose()
        self._advance_object(dt)
        pose = self.object_pose()
        speed = float(np.linalg.norm(pose.translation - before.translation) / dt)
        obs = detect_candidates(
            self.obj, pose, self.noise, 48,
            frame_index=self.tick, timestamp=self.tick * dt,
        )
        prev_phase = self.fsm.phase
        self.robot, diag = self.fsm.step(self.robot, obs, speed)
        if prev_phase is not HandoverPhase.TRACKING and self.fsm.phase is HandoverPhase.TRACKING:
            if self._tracking_since is None:
                self._tracking_since = diag.tick
        if diag.grasp_result is not None:
            self.attempts += 1
            if diag.grasp_result:
                self.successes += 1
            if self._tracking_since is not None:
                self.last_approach_time = (diag.tick - self._tracking_since + 1) * dt
            self._tracking_since = None
        tracked = diag.selected.pose if hasattr(diag.selected, "pose") else None
        state = {
            "kind": "state",
            "tick": self.tick,
            "phase": diag.phase.value,
            "object": pose_to_json(pose),
            "target": {"x": self.target[0], "y": self.target[1], "yaw_deg": self.target[2]},
            "ee": pose_to_json(self.robot.ee_pose),
            "tracked": pose_to_json(tracked) if tracked is not None else None,
            "predicted": pose_to_json(diag.predicted) if diag.predicted is not None else None,
            "gripper": self.robot.gripper,
            "successes": self.successes,
            "attempts": self.attempts,
            "last_approach_time": self.last_approach_time,
        }
        self.tick += 1
        return state


async def serve_async(
    session: Session,
    port: int = 8790,
    rate: float | None = None,
    max_ticks: int | None = None,
    host: str = "127.0.0.1",
    ready: asyncio.Event | None = None,
):
    """Run the session loop and WebSocket fan-out until max_ticks (or forever)."""
    from websockets.asyncio.server import serve

    clients: set = set()
    inbox: list[tuple[object, object]] = []

    async def handler(ws):
        clients.add(ws)
        try:
            await ws.send(json.dumps(session.hello()))
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                except (json.JSONDecodeError, UnicodeDecodeError):
                    await ws.send(json.dumps({"kind": "error", "message": "bad json"}))
                    continue
                inbox.append((ws, msg))
        finally:
            clients.discard(ws)

    loop = asyncio.get_running_loop()
    dt = 1.0 / (rate or session.cfg.control_rate)
    async with serve(handler, host, port):
        if ready is not None:
            ready.set()
        while max_ticks is None or session.tick < max_ticks:
            t0 = loop.time()
            pending, inbox[:] = inbox[:], []
            for ws, msg in pending:
                reply = session.apply_message(msg)
                if reply is not None:
                    try:
                        await ws.send(json.dumps(reply))
                    except Exception:
                        clients.discard(ws)
            frame = json.dumps(session.advance())
            for ws in list(clients):
                try:
                    await ws.send(frame)
                except Exception:
                    clients.discard(ws)
            await asyncio.sleep(max(0.0, dt - (loop.time() - t0)))


def serve_session(
    object_id: str = "box_dense",
    script: MotionScript | None = None,
    port: int = 8790,
    seed: int = 0,
    rate: float | None = None,
    max_ticks: int | None = None,
):
    session = Session(object_id=object_id, script=script, seed=seed)
    print(f"serving handover session on ws://127.0.0.1:{port} (object {object_id})")
    asyncio.run(serve_async(session, port=port, rate=rate, max_ticks=max_ticks))
