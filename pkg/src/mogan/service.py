"""Realtime character control over WebSocket.

One asyncio session per connection: a 30 Hz tick loop decodes solved
frames and streams them; when the batch runs out, the next batch is
solved in a worker thread with the latest control (latest wins,
applied only at batch boundaries).  If a solve overruns its n/tick
budget, the session degrades to prior (unoptimized) rollouts and says
so with a status message; frames are never dropped, status messages
may be.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import WebSocket, WebSocketDisconnect

from .design import MapConfig, OnlineSession, online_step
from .features import GroundTransform, feature_to_pose, wrap_angle
from .generator import GeneratorNet
from .skeleton import Skeleton, fk_positions
from .synthesis import OnlineControl

MAX_SPEED = 10.0  # m/s, control clamp


@dataclass
class SessionState:
    """Authoritative per-connection simulation state."""

    session: OnlineSession
    transform: GroundTransform
    frame_counter: int = 0
    pending: list = field(default_factory=list)   # solved, unsent features
    control: OnlineControl | None = None          # latest-wins mailbox
    degraded: bool = False


def clamp_control(msg: dict) -> tuple[OnlineControl, list[str]]:
    """Validate a control message; returns the control and warnings."""
    warnings = []
    speed = float(msg.get("speed", 0.0))
    direction = float(msg.get("direction", 0.0))
    if not np.isfinite(speed) or not np.isfinite(direction):
        raise ValueError("non-finite control values")
    if speed < 0.0:
        warnings.append(f"speed {speed} clamped to 0")
        speed = 0.0
    elif speed > MAX_SPEED:
        warnings.append(f"speed {speed} clamped to {MAX_SPEED}")
        speed = MAX_SPEED
    wrapped = float(wrap_angle(direction))
    return OnlineControl(speed, wrapped), warnings


def apply_control(state: SessionState, msg: dict) -> list[str]:
    """Latest-wins replacement; takes effect at the next batch boundary."""
    ctrl, warnings = clamp_control(msg)
    state.control = ctrl
    return warnings


def encode_frame(state: SessionState, feature: np.ndarray) -> dict:
    """Decode one feature, advance the transform, emit the wire message."""
    skel = state.session.skel
    pose, state.transform = feature_to_pose(state.transform,
                                            feature[: skel.dof])
    positions = fk_positions(skel, pose)
    contacts = feature[-2:] > 0.5
    speed = float(np.hypot(feature[0], feature[1]) * state.session.frame_rate)
    msg = {
        "type": "frame",
        "t": state.frame_counter,
        "positions": [[float(v) for v in row] for row in positions],
        "contacts": [bool(contacts[0]), bool(contacts[1])],
        "speed": speed,
        "yaw": float(pose[4]),
    }
    state.frame_counter += 1
    return msg


def skeleton_message(skel: Skeleton) -> dict:
    return {
        "type": "skeleton",
        "joints": [j.name for j in skel.joints],
        "parents": [j.parent for j in skel.joints],
        "offsets": [[float(v) for v in j.offset] for j in skel.joints],
    }


def solve_batch(state: SessionState) -> tuple[list[np.ndarray], bool]:
    """One online MAP solve; returns (features, degraded)."""
    budget = state.session.cfg.online_batch / state.session.frame_rate
    t0 = time.monotonic()
    ctrl = None if state.degraded else state.control
    feats, _, _ = online_step(state.session, ctrl)
    took = time.monotonic() - t0
    overrun = took > budget
    # degrade to prior rollouts after an overrun; recover when a prior
    # batch fits comfortably again
    if overrun:
        degraded = True
    elif state.degraded and took < 0.5 * budget:
        degraded = False
    else:
        degraded = state.degraded
    return [f for f in feats], degraded


class ControlService:
    """ASGI app factory around one loaded generator."""

    def __init__(self, gen: GeneratorNet, skel: Skeleton,
                 init_features: np.ndarray, init_pose: np.ndarray,
                 cfg: MapConfig | None = None, tick: float = 30.0,
                 static_dir=None):
        self.gen = gen
        self.skel = skel
        self.init_features = np.asarray(init_features, dtype=np.float64)
        self.init_pose = np.asarray(init_pose, dtype=np.float64)
        self.cfg = cfg or MapConfig()
        self.tick = tick
        self.static_dir = static_dir

    def new_state(self) -> SessionState:
        session = OnlineSession.start(self.gen, self.init_features,
                                      self.init_pose, self.skel, self.cfg,
                                      frame_rate=self.tick)
        return SessionState(session,
                            GroundTransform.from_pose(self.init_pose))

    def app(self):
        from fastapi import FastAPI

        app = FastAPI()
        service = self

        @app.websocket("/control")
        async def control(ws: WebSocket):
            import sys
            import traceback

            try:
                await service.session_loop(ws)
            except WebSocketDisconnect:
                pass
            except Exception:
                traceback.print_exc(file=sys.stderr)
                raise

        return self._finish_app(app)

    async def session_loop(self, ws: WebSocket) -> None:
        service = self
        await ws.accept()
        state = service.new_state()
        send_q: asyncio.Queue = asyncio.Queue(maxsize=256)
        stop = asyncio.Event()

        async def sender():
            while not stop.is_set():
                try:
                    msg = await asyncio.wait_for(send_q.get(), timeout=0.25)
                except asyncio.TimeoutError:
                    continue
                await ws.send_text(json.dumps(msg))

        def post(msg: dict, droppable: bool = False):
            try:
                send_q.put_nowait(msg)
            except asyncio.QueueFull:
                if not droppable:
                    raise

        async def receiver():
            while not stop.is_set():
                try:
                    text = await ws.receive_text()
                except WebSocketDisconnect:
                    stop.set()
                    return
                try:
                    msg = json.loads(text)
                    kind = msg.get("type")
                    if kind == "control":
                        for w in apply_control(state, msg):
                            post({"type": "status", "level": "warning",
                                  "text": w}, droppable=True)
                    elif kind == "reset":
                        fresh = service.new_state()
                        state.session = fresh.session
                        state.transform = fresh.transform
                        state.pending.clear()
                    else:
                        post({"type": "error",
                              "text": f"unknown message type {kind!r}"})
                except (ValueError, KeyError, TypeError) as e:
                    post({"type": "error", "text": f"bad message: {e}"})

        async def simulate():
            loop = asyncio.get_running_loop()
            period = 1.0 / service.tick
            next_t = time.monotonic()
            while not stop.is_set():
                if not state.pending:
                    was_degraded = state.degraded
                    feats, degraded = await loop.run_in_executor(
                        None, solve_batch, state)
                    state.pending.extend(feats)
                    state.degraded = degraded
                    if degraded and not was_degraded:
                        post({"type": "status", "level": "degraded",
                              "text": "solver overran its budget; "
                                      "emitting prior rollouts"},
                             droppable=True)
                    elif was_degraded and not degraded:
                        post({"type": "status", "level": "ok",
                              "text": "solver recovered"}, droppable=True)
                frame = encode_frame(state, state.pending.pop(0))
                await send_q.put(frame)    # frames are never dropped
                next_t += period
                delay = next_t - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)

        post(skeleton_message(service.skel))
        tasks = [asyncio.create_task(t())
                 for t in (sender, receiver, simulate)]
        try:
            done, _ = await asyncio.wait(
                tasks, return_when=asyncio.FIRST_EXCEPTION)
            for t in done:
                exc = t.exception()
                if exc is not None and not isinstance(exc, WebSocketDisconnect):
                    raise exc
        finally:
            stop.set()
            for t in tasks:
                t.cancel()

    def _finish_app(self, app):
        if self.static_dir is not None:
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=self.static_dir, html=True),
                      name="ui")
        return app


def serve(gen: GeneratorNet, skel: Skeleton, init_features: np.ndarray,
          init_pose: np.ndarray, host: str = "127.0.0.1", port: int = 8765,
          cfg: MapConfig | None = None, tick: float = 30.0,
          static_dir=None) -> None:
    """Run the control service until interrupted."""
    import uvicorn

    service = ControlService(gen, skel, init_features, init_pose, cfg, tick,
                             static_dir)
    uvicorn.run(service.app(), host=host, port=port, log_level="warning")
