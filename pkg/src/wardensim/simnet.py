"""Deterministic discrete-event engine and network topology.

One global event queue drives the whole simulation: covert sender and
receiver are event callbacks, the warden sits on the direct link (DCL), and
the indirect link (ICL) bypasses it. Time is integer microseconds; events
pop in (time, sequence) order, so a run is a pure function of configuration
and seeds. Loss is applied per hop: before the warden, after it, and on the
indirect link.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from heapq import heappop, heappush
from random import Random
from typing import Any, Callable

from .packets import PacketHeaderSet, format_packet
from .wardens import DynamicWarden, Warden

US_PER_MS = 1_000
US_PER_S = 1_000_000


def seconds_us(s: float) -> int:
    return round(s * US_PER_S)


def millis_us(ms: float) -> int:
    return round(ms * US_PER_MS)


class SchedulingInPastError(ValueError):
    """Event scheduled before the current simulation time."""


class EventBudgetExhaustedError(RuntimeError):
    """Deadlock guard: the stop condition was not reached.

    Raised both when the configured event budget runs out and when the event
    queue drains early. Carries partial diagnostics for reporting.
    """

    def __init__(self, detail: str, *, events_processed: int, sim_time_us: int,
                 received: int = 0) -> None:
        super().__init__(
            f"{detail} (events={events_processed}, t={sim_time_us}us, received={received})"
        )
        self.detail = detail
        self.events_processed = events_processed
        self.sim_time_us = sim_time_us
        self.received = received


class EventKind(Enum):
    DELIVER_DCL = "DELIVER_DCL"
    DELIVER_ICL = "DELIVER_ICL"
    TIMER = "TIMER"
    WINDOW = "WINDOW"
    RELOAD = "RELOAD"


@dataclass(frozen=True)
class SimEvent:
    at: int
    seq: int
    kind: EventKind
    payload: Any


@dataclass
class LinkConfig:
    latency_us: int = 5 * US_PER_MS
    loss_prob: float = 0.0
    rng: Random = field(default_factory=lambda: Random(0))


class EventQueue:
    """Min-heap over (at, seq); seq is a monotonically increasing tiebreak so
    simultaneous events pop in scheduling order."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._seq = itertools.count()
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at: int, kind: EventKind, payload: Any) -> SimEvent:
        if at < self.now:
            raise SchedulingInPastError(f"cannot schedule at {at} (now {self.now})")
        ev = SimEvent(at=at, seq=next(self._seq), kind=kind, payload=payload)
        heappush(self._heap, (ev.at, ev.seq, ev))
        return ev

    def pop(self) -> SimEvent:
        _, _, ev = heappop(self._heap)
        self.now = ev.at
        return ev


class World:
    """Wires queue, links, warden, and the two covert peers together.

    Peers talk to the world through ``send_dcl``/``send_icl``/``set_timer``;
    the world dispatches deliveries and timers back into them. The trace is
    collected as newline-less strings, one per observable event.
    """

    def __init__(self, warden: Warden, dcl: LinkConfig, icl: LinkConfig,
                 event_budget: int = 2_000_000) -> None:
        self.queue = EventQueue()
        self.warden = warden
        self.dcl = dcl
        self.icl = icl
        self.event_budget = event_budget
        self.events_processed = 0
        self.trace_lines: list[str] = []
        self.dcl_sent = 0
        self.dcl_delivered = 0
        self.icl_sent = 0
        self.cs: Any = None
        self.cr: Any = None

    # -- services used by peers and the warden ------------------------------

    @property
    def now(self) -> int:
        return self.queue.now

    def trace(self, line: str) -> None:
        self.trace_lines.append(line)

    def set_timer(self, at: int, owner: str, tag: str, data: Any = None) -> None:
        self.queue.schedule(at, EventKind.TIMER, (owner, tag, data))

    def send_dcl(self, p: PacketHeaderSet, depart_at: int | None = None) -> None:
        """Packet toward the warden; forwarded/normalized outcomes continue to
        the receiver one hop later, drops end here."""
        depart = self.now if depart_at is None else depart_at
        self.dcl_sent += 1
        if self.dcl.rng.random() < self.dcl.loss_prob:
            self.trace(f"{depart} DCL LOST-PRE {format_packet(p)}")
            return
        self.queue.schedule(depart + self.dcl.latency_us, EventKind.DELIVER_DCL,
                            ("warden", p))

    def send_icl(self, msg: Any, to: str, depart_at: int | None = None) -> None:
        depart = self.now if depart_at is None else depart_at
        self.icl_sent += 1
        if self.icl.rng.random() < self.icl.loss_prob:
            self.trace(f"{depart} ICL LOST {msg.describe()}")
            return
        self.queue.schedule(depart + self.icl.latency_us, EventKind.DELIVER_ICL, (to, msg))

    # -- wiring --------------------------------------------------------------

    def attach(self, cs: Any, cr: Any) -> None:
        self.cs = cs
        self.cr = cr
        self.set_timer(0, "cs", "kick")
        next_at = self.warden.next_housekeeping_at()
        if next_at is not None:
            kind = EventKind.RELOAD if isinstance(self.warden, DynamicWarden) else EventKind.WINDOW
            self.queue.schedule(next_at, kind, None)

    def _dispatch(self, ev: SimEvent) -> None:
        if ev.kind is EventKind.DELIVER_DCL:
            stage, packet = ev.payload
            if stage == "warden":
                outcome = self.warden.process(packet, ev.at)
                self.trace(f"{ev.at} DCL {outcome.verdict.value} {format_packet(packet)}")
                if outcome.packet is not None:
                    if self.dcl.rng.random() < self.dcl.loss_prob:
                        self.trace(f"{ev.at} DCL LOST-POST {format_packet(outcome.packet)}")
                        return
                    self.queue.schedule(ev.at + self.dcl.latency_us, EventKind.DELIVER_DCL,
                                        ("cr", outcome.packet))
            else:
                self.dcl_delivered += 1
                self.cr.on_dcl_packet(packet, ev.at)
        elif ev.kind is EventKind.DELIVER_ICL:
            to, msg = ev.payload
            self.trace(f"{ev.at} ICL {msg.describe()}")
            peer = self.cs if to == "cs" else self.cr
            peer.on_icl(msg, ev.at)
        elif ev.kind is EventKind.TIMER:
            owner, tag, data = ev.payload
            peer = self.cs if owner == "cs" else self.cr
            peer.on_timer(tag, data, ev.at)
        else:  # WINDOW / RELOAD housekeeping
            self.warden.housekeep(ev.at)
            next_at = self.warden.next_housekeeping_at()
            if next_at is not None:
                self.queue.schedule(next_at, ev.kind, None)

    def run_until(self, stop: Callable[["World"], bool]) -> list[str]:
        """Process events in order until ``stop(world)`` holds; returns the
        trace. Raises the budget error if the queue drains or the budget is
        exhausted first."""
        while True:
            if stop(self):
                return self.trace_lines
            if not self.queue:
                raise EventBudgetExhaustedError(
                    "event queue drained before the stop condition",
                    events_processed=self.events_processed,
                    sim_time_us=self.now,
                    received=getattr(self.cr, "received_covert_count", 0),
                )
            if self.events_processed >= self.event_budget:
                raise EventBudgetExhaustedError(
                    "event budget exhausted before the stop condition",
                    events_processed=self.events_processed,
                    sim_time_us=self.now,
                    received=getattr(self.cr, "received_covert_count", 0),
                )
            ev = self.queue.pop()
            self.events_processed += 1
            self._dispatch(ev)
