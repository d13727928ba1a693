"""Deterministic discrete-event simulation kernel with four-phase handshake channels.

Time is an integer count of *subticks*.  One hundred subticks make one
*unit*, defined as the latency of a single two-input arbiter decision; all
latency figures reported by the higher-level models are expressed in units.
Sub-unit analog delays (CAM charge times, gate delays) live on the subtick
grid.

A ``Kernel`` owns all of its simulation state.  Independent kernels may run
in parallel on separate configurations; nothing is shared between them.
Events scheduled for the same instant are dispatched in creation (id) order,
so a fixed configuration and seed always reproduce the same trace.
"""

from __future__ import annotations

import csv
import heapq
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Iterable

SUBTICKS_PER_UNIT = 100


def units(n) -> int:
    """Convert a latency in arbiter units (int, Fraction, ...) to subticks."""
    v = n * SUBTICKS_PER_UNIT
    iv = int(v)
    if iv != v:
        raise ValueError(f"{n} units is not representable on the subtick grid")
    return iv


def to_units(subticks: int) -> Fraction:
    """Express a subtick count as an exact number of arbiter units."""
    return Fraction(subticks, SUBTICKS_PER_UNIT)


class SchedulingInPast(ValueError):
    """An event was scheduled before the kernel's current time."""


class ProtocolViolation(RuntimeError):
    """A four-phase handshake was driven out of order.

    Carries the offending phase and action so fault-injection tests can
    assert on what went wrong.
    """

    def __init__(self, channel: str, phase: "Phase", action: "HsAction"):
        super().__init__(f"channel {channel!r}: action {action.name} is illegal in phase {phase.name}")
        self.channel = channel
        self.phase = phase
        self.action = action


@dataclass(frozen=True)
class TraceRecord:
    time: int
    component: str
    signal: str
    old: int
    new: int


@dataclass(frozen=True)
class Event:
    id: int
    at: int
    target: str
    payload: Any = None


@dataclass(frozen=True)
class RunStats:
    dispatched: int
    final_time: int


class Kernel:
    """Single-threaded event queue with an optional ring-buffered signal trace.

    Tracing is off by default so large sweeps do not pay for it; pass a
    positive ``trace_capacity`` to keep the most recent records, or ``None``
    for an unbounded trace.
    """

    def __init__(self, trace_capacity: int | None = 0):
        self.now: int = 0
        self._queue: list[tuple[int, int, str, Any]] = []
        self._next_id = 0
        self._handlers: dict[str, Callable[["Kernel", Event], None]] = {}
        if trace_capacity == 0:
            self._trace = None
        elif trace_capacity is None:
            self._trace = deque()
        else:
            self._trace = deque(maxlen=trace_capacity)

    # -- components ------------------------------------------------------

    def add_component(self, name: str, handler: Callable[["Kernel", Event], None]) -> None:
        self._handlers[name] = handler

    # -- scheduling ------------------------------------------------------

    def schedule(self, at: int, target: str, payload: Any = None) -> int:
        """Queue an event; returns its id.  ``at`` must not be in the past."""
        if at < self.now:
            raise SchedulingInPast(f"event at t={at} scheduled while now={self.now}")
        eid = self._next_id
        self._next_id += 1
        heapq.heappush(self._queue, (at, eid, target, payload))
        return eid

    def run_until(self, limit: int) -> RunStats:
        """Dispatch every event with ``at <= limit``; time advances to ``limit``."""
        dispatched = 0
        queue = self._queue
        handlers = self._handlers
        while queue and queue[0][0] <= limit:
            at, eid, target, payload = heapq.heappop(queue)
            self.now = at
            handlers[target](self, Event(id=eid, at=at, target=target, payload=payload))
            dispatched += 1
        if limit > self.now:
            self.now = limit
        return RunStats(dispatched, self.now)

    def run(self) -> RunStats:
        """Dispatch until the queue drains."""
        dispatched = 0
        queue = self._queue
        handlers = self._handlers
        while queue:
            at, eid, target, payload = heapq.heappop(queue)
            self.now = at
            handlers[target](self, Event(id=eid, at=at, target=target, payload=payload))
            dispatched += 1
        return RunStats(dispatched, self.now)

    def pending_count(self) -> int:
        return len(self._queue)

    # -- tracing ---------------------------------------------------------

    @property
    def tracing(self) -> bool:
        return self._trace is not None

    def record(self, component: str, signal: str, old: int, new: int, at: int | None = None) -> None:
        if self._trace is None:
            return
        t = self.now if at is None else at
        self._trace.append(TraceRecord(t, component, signal, old, new))

    def trace_records(self) -> list[TraceRecord]:
        if self._trace is None:
            return []
        return sorted(self._trace, key=lambda r: r.time)


def export_trace_csv(records: Iterable[TraceRecord], out) -> None:
    """Write trace records as ``time,component,signal,old,new`` CSV (UTF-8, LF)."""
    close = False
    if isinstance(out, (str, bytes)):
        out = open(out, "w", encoding="utf-8", newline="")
        close = True
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["time", "component", "signal", "old", "new"])
        for r in records:
            w.writerow([r.time, r.component, r.signal, r.old, r.new])
    finally:
        if close:
            out.close()


def load_trace_csv(src) -> list[TraceRecord]:
    close = False
    if isinstance(src, (str, bytes)):
        src = open(src, "r", encoding="utf-8", newline="")
        close = True
    try:
        rdr = csv.reader(src)
        header = next(rdr, None)
        records = []
        for row in rdr:
            if not row:
                continue
            records.append(TraceRecord(int(row[0]), row[1], row[2], int(row[3]), int(row[4])))
        return records
    finally:
        if close:
            src.close()


# -- four-phase handshake -------------------------------------------------


class Phase(Enum):
    IDLE = "Idle"
    REQ_HIGH = "ReqHigh"
    ACK_HIGH = "AckHigh"
    REQ_LOW = "ReqLow"


class HsAction(Enum):
    REQ_UP = "req_up"
    ACK_UP = "ack_up"
    REQ_DOWN = "req_down"
    ACK_DOWN = "ack_down"


_NEXT_PHASE = {
    (Phase.IDLE, HsAction.REQ_UP): Phase.REQ_HIGH,
    (Phase.REQ_HIGH, HsAction.ACK_UP): Phase.ACK_HIGH,
    (Phase.ACK_HIGH, HsAction.REQ_DOWN): Phase.REQ_LOW,
    (Phase.REQ_LOW, HsAction.ACK_DOWN): Phase.IDLE,
}

_SIGNAL_EDGE = {
    HsAction.REQ_UP: ("req", 0, 1),
    HsAction.ACK_UP: ("ack", 0, 1),
    HsAction.REQ_DOWN: ("req", 1, 0),
    HsAction.ACK_DOWN: ("ack", 1, 0),
}


class HandshakeChannel:
    """Return-to-zero request/acknowledge pair with optional bundled data.

    The only legal transition cycle is Idle -> ReqHigh -> AckHigh -> ReqLow
    -> Idle.  When the channel carries bundled data, ``data_valid`` must be
    set strictly before the request rises.
    """

    def __init__(self, name: str, kernel: Kernel | None = None, carries_data: bool = False):
        self.name = name
        self.kernel = kernel
        self.carries_data = carries_data
        self.phase = Phase.IDLE
        self.data_valid = False
        self.data_valid_time: int | None = None
        self.transition_times: dict[HsAction, int] = {}

    def _now(self, at: int | None) -> int:
        if at is not None:
            return at
        return self.kernel.now if self.kernel is not None else 0

    def set_data_valid(self, valid: bool, at: int | None = None) -> None:
        t = self._now(at)
        if self.kernel is not None:
            self.kernel.record(self.name, "data_valid", int(self.data_valid), int(valid), at=t)
        self.data_valid = valid
        self.data_valid_time = t if valid else None

    def advance(self, action: HsAction, at: int | None = None) -> Phase:
        """Apply one transition; raises ProtocolViolation on an illegal order."""
        nxt = _NEXT_PHASE.get((self.phase, action))
        if nxt is None:
            raise ProtocolViolation(self.name, self.phase, action)
        t = self._now(at)
        if action is HsAction.REQ_UP and self.carries_data:
            if not self.data_valid or self.data_valid_time is None or not (self.data_valid_time < t):
                raise ProtocolViolation(self.name, self.phase, action)
        sig, old, new = _SIGNAL_EDGE[action]
        if self.kernel is not None:
            self.kernel.record(self.name, sig, old, new, at=t)
        self.phase = nxt
        self.transition_times[action] = t
        return nxt


def advance_handshake(channel: HandshakeChannel, action: HsAction, at: int | None = None) -> Phase:
    """Module-level convenience wrapper around ``HandshakeChannel.advance``."""
    return channel.advance(action, at=at)


# -- trace audits -----------------------------------------------------------


@dataclass(frozen=True)
class TimingViolation:
    constraint: str
    time: int
    detail: str

    def to_dict(self) -> dict:
        return {"constraint": self.constraint, "time": self.time, "detail": self.detail}


def violations_to_json(violations: Iterable[TimingViolation]) -> str:
    import json

    return json.dumps([v.to_dict() for v in violations], sort_keys=True)


def check_handshake_projection(records: Iterable[TraceRecord]) -> list[TimingViolation]:
    """Verify each component's (req, ack) trace follows the four-phase cycle.

    The only legal edge order per component is req-up, ack-up, req-down,
    ack-down, repeated.  Records for signals other than req/ack are ignored.
    """
    cycle = [("req", 1), ("ack", 1), ("req", 0), ("ack", 0)]
    state: dict[str, int] = {}
    violations: list[TimingViolation] = []
    ordered = sorted((r for r in records if r.signal in ("req", "ack")), key=lambda r: r.time)
    for r in ordered:
        pos = state.get(r.component, 0)
        expect = cycle[pos % 4]
        if (r.signal, r.new) == expect:
            state[r.component] = pos + 1
        else:
            violations.append(
                TimingViolation(
                    "handshake-order",
                    r.time,
                    f"{r.component}: {r.signal} -> {r.new} arrived while expecting {expect[0]} -> {expect[1]}",
                )
            )
    return violations
