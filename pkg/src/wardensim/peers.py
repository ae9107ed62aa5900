"""Covert sender (CS) and covert receiver (CR) state machines.

The sender learns which techniques pass the warden by announcing a probe over
the indirect link and pushing several identical covert copies through the
direct link; a probe succeeds only if the receiver can still extract the
announced token. Once at least one technique is known to pass, covert data
flows in bursts over the nonblocked techniques in round-robin order while
probing continues between bursts. Bursts are announced like probes so the
receiver can report per-burst delivery counts back; a zero-count burst
demotes its technique and probing rediscovers alternatives. Blocked
techniques are retested after a configurable delay.

The receiver distinguishes probe announcements from burst announcements by
mirroring channel state from the feedback it itself emitted (every status
transition at the sender is caused by one of those messages, and the
indirect link preserves order). The sender keeps safety timers so a lost
indirect message degrades a probe or burst into a failure instead of a hang.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from random import Random

from .channels import decode_any, embed, payload_bits, technique
from .packets import PacketHeaderSet, make_overt_packet
from .simnet import US_PER_MS, US_PER_S
from .wardens import RULE_COUNT


class MessageKind(Enum):
    ANNOUNCE = "ANNOUNCE"
    FEEDBACK = "FEEDBACK"


class ProbeOutcome(Enum):
    RECEIVED = "RECEIVED"
    TIMEOUT = "TIMEOUT"


class ChannelState(Enum):
    UNKNOWN = "UNKNOWN"
    NONBLOCKED = "NONBLOCKED"
    BLOCKED = "BLOCKED"


class CsPhase(Enum):
    NEL_ONLY = "NEL_ONLY"
    NEL_PLUS_COM = "NEL_PLUS_COM"


@dataclass(frozen=True)
class IclMessage:
    """Metadata-only message on the indirect link: technique ids, tokens,
    outcomes, and counts. Covert payload never crosses this link."""

    kind: MessageKind
    technique_id: int
    probe_token: int
    outcome: ProbeOutcome | None = None
    received_count: int | None = None

    def describe(self) -> str:
        parts = [self.kind.value, f"t={self.technique_id}", f"token={self.probe_token}"]
        if self.outcome is not None:
            parts.append(self.outcome.value)
        if self.received_count is not None:
            parts.append(str(self.received_count))
        return " ".join(parts)


@dataclass
class PeerConfig:
    """Shared protocol constants of both peers."""

    target_packets: int = 100
    probe_repeat: int = 5
    com_burst: int = 5
    fail_pause_us: int = US_PER_S
    probe_timeout_us: int = 2 * US_PER_S
    retest_delay_us: int = 30 * US_PER_S
    send_spacing_us: int = US_PER_MS
    # Probe turns the sender may take between two data bursts once the
    # communication phase is running; keeps learning active without letting
    # retests starve the transfer.
    probes_between_bursts: int = 3
    rng: Random = field(default_factory=lambda: Random(0))

    def __post_init__(self) -> None:
        for name in ("target_packets", "probe_repeat", "com_burst", "probes_between_bursts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


# Margin added to the receiver-side deadline before the sender gives up on a
# pending probe/burst locally (covers link latency and lost metadata).
_SAFETY_MARGIN_US = US_PER_S


@dataclass
class _Status:
    state: ChannelState = ChannelState.UNKNOWN
    last_tested: int = 0


class CovertSender:
    """Sequential sender: at most one probe or one burst is in flight, and
    probing alternates with data bursts while both have work to do."""

    def __init__(self, config: PeerConfig, net) -> None:
        self.config = config
        self.net = net
        self.status: dict[int, _Status] = {tid: _Status() for tid in range(RULE_COUNT)}
        self.pending_probe: tuple[int, int] | None = None  # (technique, token)
        self.pending_burst: tuple[int, int] | None = None
        self.per_technique: dict[int, dict[str, int]] = {
            tid: {"probes": 0, "successes": 0} for tid in range(RULE_COUNT)
        }
        self.packets_sent = 0
        self.packets_acknowledged = 0
        self._probe_budget = config.probes_between_bursts
        self._rotation_cursor = 0
        self._com_counter = 0
        self._token_counter = 0
        self._pkt_counter = 0

    # -- views ---------------------------------------------------------------

    @property
    def phase(self) -> CsPhase:
        if any(s.state is ChannelState.NONBLOCKED for s in self.status.values()):
            return CsPhase.NEL_PLUS_COM
        return CsPhase.NEL_ONLY

    def classify_summary(self) -> dict[int, tuple[ChannelState, int]]:
        """Immutable snapshot of the per-technique channel knowledge."""
        return {tid: (s.state, s.last_tested) for tid, s in self.status.items()}

    def _nonblocked(self) -> list[int]:
        return [t for t in range(RULE_COUNT) if self.status[t].state is ChannelState.NONBLOCKED]

    def _probeable(self, now: int) -> list[int]:
        out = []
        for tid in range(RULE_COUNT):
            s = self.status[tid]
            if s.state is ChannelState.UNKNOWN:
                out.append(tid)
            elif (s.state is ChannelState.BLOCKED
                  and now - s.last_tested >= self.config.retest_delay_us):
                out.append(tid)
        return out

    # -- scheduling ------------------------------------------------------------

    def on_timer(self, tag: str, data, now: int) -> None:
        if tag == "kick":
            self.kick(now)
        elif tag == "probe-safety" and self.pending_probe == data:
            tid, _ = data
            self.pending_probe = None
            self._mark_blocked(tid, now)
            self.net.set_timer(now + self.config.fail_pause_us, "cs", "kick")
        elif tag == "burst-safety" and self.pending_burst == data:
            tid, _ = data
            self.pending_burst = None
            self._mark_blocked(tid, now)
            self.kick(now)

    def kick(self, now: int) -> None:
        """Start the next probe or burst if the sender is idle."""
        if self.pending_probe is not None or self.pending_burst is not None:
            return
        probeable = self._probeable(now)
        nonblocked = self._nonblocked()
        if nonblocked and self.packets_acknowledged >= self.config.target_packets:
            return  # transfer complete from the sender's perspective
        if nonblocked:
            if probeable and self._probe_budget > 0:
                self._start_probe(probeable, now)
            else:
                self._start_burst(nonblocked, now)
            return
        if probeable:
            self._start_probe(probeable, now)
            return
        self._idle_until_retest(now)

    def _idle_until_retest(self, now: int) -> None:
        # Everything is blocked and too fresh to retest: not fatal, sleep
        # until the earliest retest time.
        wake = min(
            s.last_tested + self.config.retest_delay_us
            for s in self.status.values()
            if s.state is ChannelState.BLOCKED
        )
        self.net.set_timer(max(wake, now), "cs", "kick")

    def _next_token(self) -> int:
        self._token_counter += 1
        return self._token_counter

    def _covert_packet(self, tid: int, bits: str) -> PacketHeaderSet:
        overt = make_overt_packet(technique(tid).protocol, self._pkt_counter)
        self._pkt_counter += 1
        return embed(tid, overt, bits)

    def _start_probe(self, candidates: list[int], now: int) -> None:
        tid = self.config.rng.choice(sorted(candidates))
        token = self._next_token()
        self.pending_probe = (tid, token)
        self.per_technique[tid]["probes"] += 1
        self._probe_budget -= 1
        self.net.send_icl(IclMessage(MessageKind.ANNOUNCE, tid, token), to="cr")
        bits = payload_bits(token, technique(tid).capacity_bits)
        for i in range(self.config.probe_repeat):
            self.net.send_dcl(self._covert_packet(tid, bits),
                              depart_at=now + i * self.config.send_spacing_us)
            self.packets_sent += 1
        deadline = (now + self.config.probe_timeout_us + _SAFETY_MARGIN_US
                    + self.config.probe_repeat * self.config.send_spacing_us)
        self.net.set_timer(deadline, "cs", "probe-safety", (tid, token))

    def _start_burst(self, nonblocked: list[int], now: int) -> None:
        tid = nonblocked[self._rotation_cursor % len(nonblocked)]
        self._rotation_cursor += 1
        token = self._next_token()
        self.pending_burst = (tid, token)
        self._probe_budget = self.config.probes_between_bursts
        self.net.send_icl(IclMessage(MessageKind.ANNOUNCE, tid, token), to="cr")
        width = technique(tid).capacity_bits
        for i in range(self.config.com_burst):
            bits = payload_bits(self._com_counter, width)
            self._com_counter += 1
            self.net.send_dcl(self._covert_packet(tid, bits),
                              depart_at=now + i * self.config.send_spacing_us)
            self.packets_sent += 1
        deadline = (now + self.config.probe_timeout_us + _SAFETY_MARGIN_US
                    + self.config.com_burst * self.config.send_spacing_us)
        self.net.set_timer(deadline, "cs", "burst-safety", (tid, token))

    def _mark_blocked(self, tid: int, now: int) -> None:
        self.status[tid] = _Status(ChannelState.BLOCKED, now)

    # -- feedback ---------------------------------------------------------------

    def on_icl(self, msg: IclMessage, now: int) -> None:
        if msg.kind is not MessageKind.FEEDBACK:
            return
        key = (msg.technique_id, msg.probe_token)
        if self.pending_probe == key:
            self.pending_probe = None
            if msg.outcome is ProbeOutcome.RECEIVED:
                self.status[msg.technique_id] = _Status(ChannelState.NONBLOCKED)
                self.per_technique[msg.technique_id]["successes"] += 1
                self.kick(now)
            else:
                self._mark_blocked(msg.technique_id, now)
                self.net.set_timer(now + self.config.fail_pause_us, "cs", "kick")
        elif self.pending_burst == key:
            self.pending_burst = None
            count = msg.received_count or 0
            self.packets_acknowledged += count
            if count == 0:
                self._mark_blocked(msg.technique_id, now)
            self.kick(now)
        # anything else is a stale feedback already resolved by a safety timer


@dataclass
class _Expectation:
    technique_id: int
    token: int
    count: int = 0


class CovertReceiver:
    """Counts covert arrivals and reports probe/burst outcomes over ICL."""

    def __init__(self, config: PeerConfig, net) -> None:
        self.config = config
        self.net = net
        self.shadow: dict[int, ChannelState] = {
            tid: ChannelState.UNKNOWN for tid in range(RULE_COUNT)
        }
        self.probe_expect: dict[int, _Expectation] = {}
        self.burst_expect: dict[int, _Expectation] = {}
        self.received_covert_count = 0
        self.first_established_at: int | None = None
        self.delivered_packets = 0

    def on_timer(self, tag: str, token, now: int) -> None:
        if tag == "probe-deadline":
            exp = self.probe_expect.pop(token, None)
            if exp is not None:  # still armed = never answered
                self.shadow[exp.technique_id] = ChannelState.BLOCKED
                self._feedback(exp, ProbeOutcome.TIMEOUT, 0)
        elif tag == "burst-deadline":
            exp = self.burst_expect.pop(token, None)
            if exp is not None:
                if exp.count == 0:
                    self.shadow[exp.technique_id] = ChannelState.BLOCKED
                    self._feedback(exp, ProbeOutcome.TIMEOUT, 0)
                else:
                    self._feedback(exp, ProbeOutcome.RECEIVED, exp.count)

    def on_icl(self, msg: IclMessage, now: int) -> None:
        if msg.kind is not MessageKind.ANNOUNCE:
            return
        exp = _Expectation(technique_id=msg.technique_id, token=msg.probe_token)
        if self.shadow[msg.technique_id] is ChannelState.NONBLOCKED:
            self.burst_expect[msg.probe_token] = exp
            tag = "burst-deadline"
        else:
            self.probe_expect[msg.probe_token] = exp
            tag = "probe-deadline"
        self.net.set_timer(now + self.config.probe_timeout_us, "cr", tag, msg.probe_token)

    def on_dcl_packet(self, p: PacketHeaderSet, now: int) -> None:
        self.delivered_packets += 1
        hit = decode_any(p)
        if hit is None:
            return  # overt or normalized: carries nothing
        tid, bits = hit
        for token in sorted(self.probe_expect):
            exp = self.probe_expect[token]
            if exp.technique_id != tid:
                continue
            if bits == payload_bits(token, technique(tid).capacity_bits):
                # First valid copy answers the probe; the expectation is
                # disarmed right away so the remaining copies fall through as
                # uncounted strays instead of polluting a later burst.
                del self.probe_expect[token]
                self.shadow[tid] = ChannelState.NONBLOCKED
                if self.first_established_at is None:
                    self.first_established_at = now
                self._feedback(exp, ProbeOutcome.RECEIVED, 1)
                return
        for token in sorted(self.burst_expect):
            exp = self.burst_expect[token]
            if exp.technique_id != tid:
                continue
            exp.count += 1
            self.received_covert_count += 1
            if exp.count >= self.config.com_burst:
                del self.burst_expect[token]
                self._feedback(exp, ProbeOutcome.RECEIVED, exp.count)
            return
        # covert packet without a matching expectation: stray, not counted

    def _feedback(self, exp: _Expectation, outcome: ProbeOutcome, count: int) -> None:
        self.net.send_icl(
            IclMessage(MessageKind.FEEDBACK, exp.technique_id, exp.token,
                       outcome=outcome, received_count=count),
            to="cs",
        )
