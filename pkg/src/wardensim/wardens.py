"""The three warden state machines: regular, dynamic, and adaptive.

All wardens consume ``(packet, now)`` and produce a rule outcome while
keeping counters. The regular warden holds a fixed rule subset; the dynamic
warden re-draws a random subset every reload interval; the adaptive warden
additionally evaluates an inactive-checked subset of rules, records a trigger
timestamp whenever one of them matches, and promotes a rule into the active
set once its triggers within the current window reach the configured
threshold. Windows discard triggers on expiry, demote promoted-but-idle
rules, and resample which inactive rules are watched.

Clocks are simulated microseconds and strictly monotone per warden. Reloads
and window expiries are applied lazily before each packet and can also be
driven by the host simulation between packets (both paths are idempotent).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Callable

from .packets import PacketHeaderSet
from .rules import NormalizationRule, RuleOutcome, Verdict, apply_rule, matches, rules

TraceFn = Callable[[str], None]

RULE_COUNT = 51


class EvictionPolicy(Enum):
    FIFO = "fifo"
    NRU = "nru"


class NotEligibleError(ValueError):
    """Promotion requested for a rule below its trigger threshold."""


class EmptyActiveSetError(ValueError):
    """Eviction requested from an empty active set."""


def ratio_count(percent: float, universe: int = RULE_COUNT) -> int:
    """Percentage to rule count, rounding half up, clamped to [0, universe]."""
    count = int(percent * universe / 100.0 + 0.5)
    return min(universe, max(0, count))


@dataclass
class WardenCounters:
    normalized: int = 0
    dropped: int = 0
    forwarded: int = 0

    @property
    def processed(self) -> int:
        return self.normalized + self.dropped + self.forwarded

    def record(self, verdict: Verdict) -> None:
        if verdict is Verdict.NORMALIZED:
            self.normalized += 1
        elif verdict is Verdict.DROPPED:
            self.dropped += 1
        else:
            self.forwarded += 1


class Warden:
    """Common plumbing: counters, trace output, lazy housekeeping."""

    name = "warden"

    def __init__(self, rule_table: tuple[NormalizationRule, ...] | None = None,
                 trace: TraceFn | None = None) -> None:
        self.rule_table = rule_table if rule_table is not None else rules()
        self.counters = WardenCounters()
        self._trace = trace

    def trace(self, now: int, event: str, rule_id: int | str = "-", verdict: str = "-") -> None:
        if self._trace is not None:
            self._trace(f"{now} {self.name} {event} {rule_id} {verdict}")

    def next_housekeeping_at(self) -> int | None:
        return None

    def housekeep(self, now: int) -> None:
        pass

    def process(self, p: PacketHeaderSet, now: int) -> RuleOutcome:
        raise NotImplementedError

    def _scan(self, active_ids: list[int], p: PacketHeaderSet, now: int) -> RuleOutcome | None:
        """First matching rule wins, ascending id order."""
        for rid in active_ids:
            if matches(rid, p):
                outcome = apply_rule(self.rule_table[rid], p)
                self.counters.record(outcome.verdict)
                self.trace(now, "MATCH_ACTIVE", rid, outcome.verdict.value)
                return outcome
        return None

    def _forward(self, p: PacketHeaderSet) -> RuleOutcome:
        outcome = RuleOutcome(verdict=Verdict.FORWARDED, packet=p)
        self.counters.record(outcome.verdict)
        return outcome


class NullWarden(Warden):
    """No rules at all; everything is forwarded unchanged."""

    name = "none"

    def process(self, p: PacketHeaderSet, now: int) -> RuleOutcome:
        return self._forward(p)


class RegularWarden(Warden):
    """Fixed active subset, immutable for the whole run."""

    name = "regular"

    def __init__(self, active_ids, rule_table=None, trace: TraceFn | None = None) -> None:
        super().__init__(rule_table, trace)
        self.active_ids = tuple(sorted(active_ids))

    def process(self, p: PacketHeaderSet, now: int) -> RuleOutcome:
        outcome = self._scan(list(self.active_ids), p, now)
        return outcome if outcome is not None else self._forward(p)


class DynamicWarden(Warden):
    """Random subset of fixed size, re-drawn every ``reload_interval_us``."""

    name = "dynamic"

    def __init__(self, subset_size: int, reload_interval_us: int, rng: Random,
                 rule_table=None, trace: TraceFn | None = None) -> None:
        super().__init__(rule_table, trace)
        if not 0 <= subset_size <= RULE_COUNT:
            raise ValueError(f"subset_size must be in [0, {RULE_COUNT}]")
        if reload_interval_us <= 0:
            raise ValueError("reload interval must be positive")
        self.subset_size = subset_size
        self.reload_interval_us = reload_interval_us
        self.rng = rng
        self._universe = list(range(RULE_COUNT))
        self.active_ids = sorted(self.rng.sample(self._universe, subset_size))
        self.next_reload_at = reload_interval_us
        self.reload_count = 0

    def next_housekeeping_at(self) -> int | None:
        return self.next_reload_at

    def housekeep(self, now: int) -> None:
        while self.next_reload_at <= now:
            self.active_ids = sorted(self.rng.sample(self._universe, self.subset_size))
            self.reload_count += 1
            self.trace(self.next_reload_at, "RELOAD")
            self.next_reload_at += self.reload_interval_us

    def process(self, p: PacketHeaderSet, now: int) -> RuleOutcome:
        self.housekeep(now)
        outcome = self._scan(self.active_ids, p, now)
        return outcome if outcome is not None else self._forward(p)


@dataclass
class AdaptiveWardenConfig:
    """Knobs of the adaptive warden.

    ``ic_ratio`` is the percentage of the 51 rules watched while inactive.
    ``ac_ratio`` bounds the active set; when None it is drawn once at
    initialization, uniformly from [0, 100 - ic_ratio]. ``twt`` is the
    trigger count that promotes a watched rule; ``ws_us`` the window length
    after which triggers are discarded.
    """

    ic_ratio: float
    twt: int
    ws_us: int
    rng: Random
    ac_ratio: float | None = None
    eviction: EvictionPolicy = EvictionPolicy.NRU
    promote_at_expiry: bool = False
    evicted_join_checked: bool = True
    redraw_ac_per_window: bool = False
    # By default the active set is pre-filled to capacity at random. The
    # pure-reactive alternative starts it empty, filling only through
    # promotions (the capacity bound still applies); it isolates the
    # trigger-threshold effect from the static pre-filled core.
    start_empty: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.ic_ratio <= 100:
            raise ValueError("ic_ratio must be in [0, 100]")
        if self.ac_ratio is not None and not 0 <= self.ac_ratio <= 100 - self.ic_ratio:
            raise ValueError("ac_ratio must be in [0, 100 - ic_ratio]")
        if self.twt < 1:
            raise ValueError("twt must be >= 1")
        if self.ws_us <= 0:
            raise ValueError("window size must be positive")


class AdaptiveWarden(Warden):
    """Trigger-driven rule promotion over a watched inactive subset."""

    name = "adaptive"

    def __init__(self, config: AdaptiveWardenConfig, rule_table=None,
                 trace: TraceFn | None = None,
                 initial_active: "set[int] | None" = None,
                 initial_checked: "set[int] | None" = None) -> None:
        super().__init__(rule_table, trace)
        self.config = config
        rng = config.rng
        self.ac_ratio = (
            config.ac_ratio if config.ac_ratio is not None
            else rng.uniform(0, 100 - config.ic_ratio)
        )
        self.capacity = ratio_count(self.ac_ratio)
        self.ic_count = ratio_count(config.ic_ratio)

        universe = list(range(RULE_COUNT))
        if initial_active is not None:
            self.active: set[int] = set(initial_active)
        elif config.start_empty:
            self.active = set()
        else:
            self.active = set(rng.sample(universe, self.capacity))
        self.inactive: set[int] = set(universe) - self.active
        if initial_checked is None:
            k = min(self.ic_count, len(self.inactive))
            self.checked: set[int] = set(rng.sample(sorted(self.inactive), k))
        else:
            if not set(initial_checked) <= self.inactive:
                raise ValueError("inactive_checked must be a subset of the inactive rules")
            self.checked = set(initial_checked)

        self.triggers: dict[int, list[int]] = {}
        self.apply_count: dict[int, int] = {}
        self.window_applies: dict[int, int] = {}
        self.last_applied: dict[int, int] = {}
        self.activated_at: dict[int, int] = {rid: 0 for rid in self.active}
        self.promoted: set[int] = set()
        self.pending_promotions: set[int] = set()
        self.window_expires_at = config.ws_us

    # -- bookkeeping -------------------------------------------------------

    def next_housekeeping_at(self) -> int | None:
        return self.window_expires_at

    def housekeep(self, now: int) -> None:
        while self.window_expires_at <= now:
            self._expire_window(self.window_expires_at)

    def trigger_count(self, rule_id: int) -> int:
        return len(self.triggers.get(rule_id, ()))

    def select_eviction(self, policy: EvictionPolicy | None = None,
                        exclude: int | None = None) -> int:
        """Pick the incumbent to displace.

        FIFO: earliest activation. NRU: least recently applied, with
        never-applied rules counting as oldest; when every active rule has
        the same usage count there is nothing `recent` to compare, so NRU
        falls back to activation order. Ties break on the smaller id.
        ``exclude`` shields the rule whose promotion caused the eviction:
        only incumbents are candidates.
        """
        candidates = self.active - {exclude} if exclude is not None else self.active
        if not candidates:
            raise EmptyActiveSetError("no active rule to evict")
        policy = policy if policy is not None else self.config.eviction
        counts = {self.apply_count.get(rid, 0) for rid in candidates}
        if policy is EvictionPolicy.NRU and len(counts) > 1:
            return min(candidates, key=lambda rid: (self.last_applied.get(rid, -1), rid))
        return min(candidates, key=lambda rid: (self.activated_at.get(rid, 0), rid))

    def promote(self, rule_id: int, now: int) -> None:
        """Move a watched rule into the active set, evicting an incumbent if
        the capacity bound would be exceeded."""
        if rule_id not in self.checked or self.trigger_count(rule_id) < self.config.twt:
            raise NotEligibleError(f"rule {rule_id} is not eligible for promotion")
        self._promote(rule_id, now)

    def _promote(self, rule_id: int, now: int) -> None:
        if self.capacity == 0:
            # Nothing can be held active; drop the triggers so the rule does
            # not re-qualify on every subsequent packet.
            self.triggers.pop(rule_id, None)
            return
        self.inactive.discard(rule_id)
        self.checked.discard(rule_id)
        self.active.add(rule_id)
        self.activated_at[rule_id] = now
        self.promoted.add(rule_id)
        self.triggers.pop(rule_id, None)
        self.trace(now, "PROMOTE", rule_id)
        if len(self.active) > self.capacity:
            self._evict(now, exclude=rule_id)

    def _evict(self, now: int, exclude: int | None = None) -> None:
        evicted = self.select_eviction(exclude=exclude)
        self.active.discard(evicted)
        self.inactive.add(evicted)
        self.promoted.discard(evicted)
        self.activated_at.pop(evicted, None)
        self.last_applied.pop(evicted, None)
        self.window_applies.pop(evicted, None)
        if self.config.evicted_join_checked:
            self.checked.add(evicted)
        self.trace(now, "EVICT", evicted)

    def _expire_window(self, boundary: int) -> None:
        window_start = boundary - self.config.ws_us
        if self.config.promote_at_expiry:
            for rid in sorted(self.pending_promotions):
                if rid in self.checked and self.trigger_count(rid) >= self.config.twt:
                    self._promote(rid, boundary)
            self.pending_promotions.clear()
        # A promoted rule that went a full window without a single application
        # is demoted; rules active since startup are never demoted.
        for rid in sorted(self.active):
            if (rid in self.promoted and self.activated_at.get(rid, 0) < window_start
                    and self.window_applies.get(rid, 0) == 0):
                self.active.discard(rid)
                self.inactive.add(rid)
                self.promoted.discard(rid)
                self.activated_at.pop(rid, None)
                self.last_applied.pop(rid, None)
                self.trace(boundary, "DEMOTE", rid)
        self.triggers = {}
        if self.config.redraw_ac_per_window:
            self.ac_ratio = self.config.rng.uniform(0, 100 - self.config.ic_ratio)
            self.capacity = ratio_count(self.ac_ratio)
            while len(self.active) > self.capacity:
                self._evict(boundary)
        k = min(self.ic_count, len(self.inactive))
        self.checked = set(self.config.rng.sample(sorted(self.inactive), k))
        self.window_applies = {}
        self.window_expires_at += self.config.ws_us
        self.trace(boundary, "EXPIRE")

    # -- packet path -------------------------------------------------------

    def process(self, p: PacketHeaderSet, now: int) -> RuleOutcome:
        self.housekeep(now)
        for rid in sorted(self.active):
            if matches(rid, p):
                outcome = apply_rule(self.rule_table[rid], p)
                self.counters.record(outcome.verdict)
                self.apply_count[rid] = self.apply_count.get(rid, 0) + 1
                self.window_applies[rid] = self.window_applies.get(rid, 0) + 1
                self.last_applied[rid] = now
                self.trace(now, "MATCH_ACTIVE", rid, outcome.verdict.value)
                return outcome
        # Watched inactive rules are evaluated only when no active rule
        # matched; they never act on the current packet.
        for rid in sorted(self.checked):
            if matches(rid, p):
                self.triggers.setdefault(rid, []).append(now)
                self.trace(now, "TRIGGER", rid)
                if len(self.triggers[rid]) >= self.config.twt:
                    if self.config.promote_at_expiry:
                        self.pending_promotions.add(rid)
                    else:
                        self._promote(rid, now)
        return self._forward(p)
