"""WebSocket gateway bridging a running simulation to ground-station clients.

The gateway owns its own thread and asyncio loop so a stalled or slow client
can never block the control loop. Traffic in both directions crosses the
thread boundary through thread-safe handoffs only: telemetry via
``call_soon_threadsafe`` on immutable snapshots, commands via
``Simulation.submit`` with the ack routed back the same way.

Protocol (one JSON object per message, newline-terminated):

* server -> client, on connect: ``{"type": "hello", "schema": ...,
  "rate_hz": ..., "paused": ..., "params": {...}, "mission": {...}}``
* server -> client, streaming: ``{"type": "telemetry", ...record fields...}``
* server -> client, after state-changing acks: ``{"type": "mission", ...}``,
  ``{"type": "param", "key": ..., "value": ...}``, ``{"type": "status",
  "paused": ...}``
* client -> server: any simulation command dict, optionally with an ``"id"``
* server -> client, per command: ``{"type": "ack", "id": ..., "ok": ...}``
  plus whatever the command returned ("params", "mission", "error", ...)

A malformed frame earns an error ack; the session stays open.
"""

from __future__ import annotations

import asyncio
import json
import math
import threading
from typing import TYPE_CHECKING

import websockets

if TYPE_CHECKING:
    from .runtime import Simulation

SCHEMA_VERSION = "leanwing/1"

# Commands whose effect every client should see, not just the sender.
_BROADCAST_AFTER = {
    "load_mission": "mission",
    "add_waypoint": "mission",
    "clear_mission": "mission",
    "set_param": "param",
    "pause": "status",
    "resume": "status",
}


def _jsonable(record: dict) -> dict:
    # JSON.parse has no NaN literal; estimator fields are NaN pre-init.
    return {k: None if isinstance(v, float) and not math.isfinite(v) else v
            for k, v in record.items()}


def _dumps(frame: dict) -> str:
    return json.dumps(frame, allow_nan=False) + "\n"


class Gateway:
    """Serves one simulation to any number of concurrent clients."""

    def __init__(self, sim: "Simulation", port: int, host: str = "127.0.0.1",
                 rate_hz: float | None = None):
        self.sim = sim
        self.host = host
        self.port = port
        if rate_hz is None:
            rate_hz = sim.config.gateway_rate_hz
        self.rate_hz = rate_hz
        self._every = max(1, round(1.0 / (rate_hz * sim.config.dt_control)))
        self._loop: asyncio.AbstractEventLoop | None = None
        self._stop: asyncio.Future | None = None
        self._clients: set = set()
        self._thread: threading.Thread | None = None
        self._ready = threading.Event()
        self._startup_error: BaseException | None = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="gateway",
                                        daemon=True)
        self._thread.start()
        self._ready.wait()
        if self._startup_error is not None:
            raise self._startup_error
        self.sim.add_record_listener(self._on_record)

    def stop(self) -> None:
        self.sim.remove_record_listener(self._on_record)
        if self._loop is not None and self._stop is not None:
            def _finish() -> None:
                if not self._stop.done():
                    self._stop.set_result(None)
            self._loop.call_soon_threadsafe(_finish)
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _run(self) -> None:
        loop = asyncio.new_event_loop()
        asyncio.set_event_loop(loop)
        try:
            loop.run_until_complete(self._serve(loop))
        finally:
            loop.close()

    async def _serve(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop
        self._stop = loop.create_future()
        try:
            server = await websockets.serve(self._session, self.host, self.port)
        except BaseException as exc:
            self._startup_error = exc
            self._ready.set()
            return
        self.port = server.sockets[0].getsockname()[1]
        self._ready.set()
        try:
            await self._stop
        finally:
            server.close()
            await server.wait_closed()

    # -- telemetry fan-out (sim thread -> loop) ------------------------------

    def _on_record(self, tick: int, record: dict) -> None:
        if tick % self._every or self._loop is None or not self._clients:
            return
        text = _dumps({"type": "telemetry", **_jsonable(record)})
        try:
            self._loop.call_soon_threadsafe(self._broadcast, text)
        except RuntimeError:
            pass  # loop already closed mid-shutdown

    def _broadcast(self, text: str) -> None:
        websockets.broadcast(self._clients, text)

    # -- per-client session ---------------------------------------------------

    async def _ask(self, command: dict) -> dict:
        """Round-trip a command through the sim thread's tick boundary."""
        loop = asyncio.get_running_loop()
        fut: asyncio.Future = loop.create_future()

        def reply_to(reply: dict) -> None:
            def _resolve() -> None:
                if not fut.done():
                    fut.set_result(reply)
            try:
                loop.call_soon_threadsafe(_resolve)
            except RuntimeError:
                pass

        self.sim.submit(command, reply_to)
        try:
            return await asyncio.wait_for(fut, timeout=5.0)
        except asyncio.TimeoutError:
            return {"ok": False, "error": "simulation is not consuming commands"}

    async def _session(self, websocket) -> None:
        params = await self._ask({"type": "get_params"})
        mission = await self._ask({"type": "get_mission"})
        await websocket.send(_dumps({
            "type": "hello",
            "schema": SCHEMA_VERSION,
            "rate_hz": self.rate_hz,
            "t": self.sim.t,
            "paused": self.sim.paused,
            "params": params.get("params", {}),
            "mission": mission.get("mission", {}),
        }))
        self._clients.add(websocket)
        try:
            async for message in websocket:
                await self._handle(websocket, message)
        except websockets.ConnectionClosed:
            pass
        finally:
            self._clients.discard(websocket)

    async def _handle(self, websocket, message) -> None:
        frame_id = None
        try:
            if isinstance(message, bytes):
                message = message.decode("utf-8")
            frame = json.loads(message)
            if not isinstance(frame, dict):
                raise ValueError("frame must be a JSON object")
            frame_id = frame.get("id")
        except (ValueError, UnicodeDecodeError) as exc:
            await websocket.send(_dumps(
                {"type": "ack", "id": frame_id, "ok": False,
                 "error": f"malformed frame: {exc}"}))
            return
        command = {k: v for k, v in frame.items() if k != "id"}
        reply = await self._ask(command)
        await websocket.send(_dumps({"type": "ack", "id": frame_id, **reply}))
        if reply.get("ok"):
            self._broadcast_effect(command, reply)

    def _broadcast_effect(self, command: dict, reply: dict) -> None:
        kind = _BROADCAST_AFTER.get(command.get("type"))
        if kind == "mission":
            self._broadcast(_dumps({"type": "mission",
                                    "mission": reply.get("mission", {})}))
        elif kind == "param":
            self._broadcast(_dumps({"type": "param", "key": command["key"],
                                    "value": command["value"]}))
        elif kind == "status":
            self._broadcast(_dumps({"type": "status",
                                    "paused": self.sim.paused}))


def serve_gateway(sim: "Simulation", port: int, host: str = "127.0.0.1",
                  rate_hz: float | None = None) -> Gateway:
    """Start a gateway for a simulation; returns the running server."""
    gw = Gateway(sim, port, host=host, rate_hz=rate_hz)
    gw.start()
    return gw
