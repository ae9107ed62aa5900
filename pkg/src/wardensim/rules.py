"""Normalization rules, one per covert technique.

A rule matches exactly the packets its technique produced (the registry keeps
the 51 value subspaces disjoint) and either rewrites the carrier fields back
to canonical values or drops the packet. Structural channels whose covert
content is an ordering or a duplicated token have no safe canonical rewrite
and default to DROP; everything else normalizes. The split is configurable
for sensitivity runs via ``build_rules(action_override=...)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .channels import catalog, technique
from .packets import PacketHeaderSet, descriptor, set_field


class RuleAction(Enum):
    NORMALIZE = "normalize"
    DROP = "drop"


class Verdict(Enum):
    FORWARDED = "FORWARDED"
    NORMALIZED = "NORMALIZED"
    DROPPED = "DROPPED"


class NotMatchingError(ValueError):
    """apply() called on a packet the rule does not match."""


# Reordered/duplicated structural tokens and rewritten message types cannot
# be reset to a single canonical value without guessing intent.
_DROP_RULE_IDS = frozenset({11, 24, 25, 34, 35, 36, 44, 45, 49})


@dataclass(frozen=True)
class NormalizationRule:
    rule_id: int
    action: RuleAction


@dataclass(frozen=True)
class RuleOutcome:
    verdict: Verdict
    packet: PacketHeaderSet | None  # absent exactly when DROPPED

    def __post_init__(self) -> None:
        if (self.packet is None) != (self.verdict is Verdict.DROPPED):
            raise ValueError("packet must be absent exactly for DROPPED outcomes")


def build_rules(action_override: RuleAction | None = None) -> tuple[NormalizationRule, ...]:
    """Rule table aligned with the catalog ids. ``action_override`` forces a
    single action for all 51 rules (e.g. an all-DROP warden)."""
    rules = []
    for t in catalog():
        if action_override is not None:
            action = action_override
        else:
            action = RuleAction.DROP if t.id in _DROP_RULE_IDS else RuleAction.NORMALIZE
        rules.append(NormalizationRule(rule_id=t.id, action=action))
    return tuple(rules)


_DEFAULT_RULES = build_rules()


def rule(rule_id: int) -> NormalizationRule:
    return _DEFAULT_RULES[rule_id]


def rules() -> tuple[NormalizationRule, ...]:
    return _DEFAULT_RULES


def matches(rule_id: int, p: PacketHeaderSet) -> bool:
    """True iff the packet exhibits technique ``rule_id``'s covert signature.
    Protocol mismatch is simply no match."""
    t = technique(rule_id)
    if p.protocol is not t.protocol:
        return False
    return t.decode_marker(p) is not None


def normalize_packet(rule_id: int, p: PacketHeaderSet) -> PacketHeaderSet:
    """Reset the technique's carrier fields to their canonical values."""
    t = technique(rule_id)
    for name in t.carrier_fields:
        p = set_field(p, name, descriptor(p.protocol, name).normal_value)
    return p


def apply_rule(r: NormalizationRule, p: PacketHeaderSet) -> RuleOutcome:
    """Apply a matching rule. Callers must have established the match; a
    non-matching packet is a contract violation."""
    if not matches(r.rule_id, p):
        raise NotMatchingError(f"rule {r.rule_id} does not match packet {p.seq_tag}")
    if r.action is RuleAction.DROP:
        return RuleOutcome(verdict=Verdict.DROPPED, packet=None)
    return RuleOutcome(verdict=Verdict.NORMALIZED, packet=normalize_packet(r.rule_id, p))
