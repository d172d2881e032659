"""In-process communication fabric: typed topics, queued services, parameters.

Topics deliver synchronously in publish order and cache the latest value so a
late subscriber starts from the current state. Each topic has exactly one
writer. Service calls are queued and drained at tick boundaries, which keeps
module execution deterministic no matter when an external interface (CLI,
gateway) files the request. Parameter writes are staged the same way and
applied atomically between ticks, with change events published on a topic.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

PARAM_EVENTS_TOPIC = "param_events"


class BusError(RuntimeError):
    pass


class Topic:
    """Single-writer, multi-subscriber channel with a latest-value cache."""

    def __init__(self, name: str, msg_type: type):
        self.name = name
        self.msg_type = msg_type
        self._writer: str | None = None
        self._subscribers: list[Callable[[Any], None]] = []
        self._latest: Any = None
        self._has_value = False

    def claim(self, writer: str) -> None:
        if self._writer is not None and self._writer != writer:
            raise BusError(
                f"topic '{self.name}' already written by '{self._writer}'")
        self._writer = writer

    def publish(self, msg: Any, writer: str) -> None:
        if self._writer is None:
            self._writer = writer
        elif writer != self._writer:
            raise BusError(
                f"'{writer}' cannot publish on '{self.name}' "
                f"(owned by '{self._writer}')")
        if not isinstance(msg, self.msg_type):
            raise BusError(
                f"topic '{self.name}' carries {self.msg_type.__name__}, "
                f"got {type(msg).__name__}")
        self._latest = msg
        self._has_value = True
        for fn in list(self._subscribers):
            fn(msg)

    def subscribe(self, fn: Callable[[Any], None]) -> None:
        self._subscribers.append(fn)
        if self._has_value:
            fn(self._latest)

    @property
    def latest(self) -> Any:
        return self._latest


@dataclass
class _PendingCall:
    name: str
    request: Any
    reply_to: Callable[[Any], None] | None


@dataclass(frozen=True)
class ParamEvent:
    key: str
    value: float
    previous: float


@dataclass(frozen=True)
class _ParamMeta:
    default: float
    minimum: float
    maximum: float
    description: str


class Bus:
    def __init__(self):
        self._topics: dict[str, Topic] = {}
        self._services: dict[str, Callable[[Any], Any]] = {}
        self._pending: deque[_PendingCall] = deque()
        self._params: dict[str, float] = {}
        self._param_meta: dict[str, _ParamMeta] = {}
        self._staged: dict[str, float] = {}
        self.topic(PARAM_EVENTS_TOPIC, ParamEvent).claim("params")

    # -- topics -----------------------------------------------------------

    def topic(self, name: str, msg_type: type | None = None) -> Topic:
        t = self._topics.get(name)
        if t is None:
            if msg_type is None:
                raise BusError(f"unknown topic '{name}'")
            t = Topic(name, msg_type)
            self._topics[name] = t
        elif msg_type is not None and msg_type is not t.msg_type:
            raise BusError(
                f"topic '{name}' is {t.msg_type.__name__}, not {msg_type.__name__}")
        return t

    @property
    def topics(self) -> tuple:
        return tuple(self._topics)

    # -- services ---------------------------------------------------------

    def register_service(self, name: str, handler: Callable[[Any], Any]) -> None:
        if name in self._services:
            raise BusError(f"service '{name}' already registered")
        self._services[name] = handler

    def call_service(self, name: str, request: Any,
                     reply_to: Callable[[Any], None] | None = None) -> None:
        """Queue a request; it executes at the next drain, reply via callback."""
        if name not in self._services:
            raise BusError(f"unknown service '{name}'")
        self._pending.append(_PendingCall(name, request, reply_to))

    def drain_services(self) -> int:
        """Run every queued service call in arrival order; returns the count."""
        n = 0
        while self._pending:
            call = self._pending.popleft()
            handler = self._services[call.name]
            try:
                reply = handler(call.request)
                reply = {"ok": True, "value": reply}
            except Exception as exc:
                reply = {"ok": False, "error": str(exc)}
            if call.reply_to is not None:
                call.reply_to(reply)
            n += 1
        return n

    # -- parameters ---------------------------------------------------------

    def declare_param(self, key: str, default: float, minimum: float = -math.inf,
                      maximum: float = math.inf, description: str = "") -> None:
        if key in self._params:
            raise BusError(f"parameter '{key}' already declared")
        if not minimum <= default <= maximum:
            raise BusError(f"default for '{key}' violates its own bounds")
        self._params[key] = float(default)
        self._param_meta[key] = _ParamMeta(float(default), float(minimum),
                                           float(maximum), description)

    def get_param(self, key: str) -> float:
        if key not in self._params:
            raise BusError(f"unknown parameter '{key}'")
        return self._params[key]

    def param_items(self) -> dict[str, float]:
        return dict(self._params)

    def param_meta(self, key: str) -> _ParamMeta:
        if key not in self._param_meta:
            raise BusError(f"unknown parameter '{key}'")
        return self._param_meta[key]

    def set_param(self, key: str, value: float) -> None:
        """Stage a parameter write; it takes effect at the next tick boundary."""
        if key not in self._params:
            raise BusError(f"unknown parameter '{key}'")
        value = float(value)
        if math.isnan(value):
            raise BusError(f"refusing NaN for parameter '{key}'")
        meta = self._param_meta[key]
        if not meta.minimum <= value <= meta.maximum:
            raise BusError(
                f"'{key}'={value} outside [{meta.minimum}, {meta.maximum}]")
        self._staged[key] = value

    def apply_staged_params(self) -> list[ParamEvent]:
        """Apply all staged writes at once, emitting one event per change."""
        events = []
        topic = self._topics[PARAM_EVENTS_TOPIC]
        for key, value in self._staged.items():
            previous = self._params[key]
            if value != previous:
                self._params[key] = value
                ev = ParamEvent(key=key, value=value, previous=previous)
                events.append(ev)
                topic.publish(ev, "params")
        self._staged.clear()
        return events
