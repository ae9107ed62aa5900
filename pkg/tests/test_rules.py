from __future__ import annotations

import pytest

from wardensim.channels import catalog, embed, extract
from wardensim.packets import Protocol, make_overt_packet, validate
from wardensim.rules import (
    NotMatchingError,
    RuleAction,
    RuleOutcome,
    Verdict,
    apply_rule,
    build_rules,
    matches,
    normalize_packet,
    rule,
    rules,
)


def test_rule_table_bijection_with_catalog():
    table = rules()
    assert len(table) == 51
    assert [r.rule_id for r in table] == [t.id for t in catalog()]


def test_rule_actions_mixed_by_default():
    actions = {r.action for r in rules()}
    assert actions == {RuleAction.NORMALIZE, RuleAction.DROP}


def test_action_override_forces_single_action():
    assert all(r.action is RuleAction.DROP for r in build_rules(RuleAction.DROP))
    assert all(r.action is RuleAction.NORMALIZE for r in build_rules(RuleAction.NORMALIZE))


def test_matches_embedded_and_not_overt():
    for t in catalog():
        overt = make_overt_packet(t.protocol, 13)
        covert = embed(t.id, overt, "1" * t.capacity_bits)
        assert matches(t.id, covert)
        assert not matches(t.id, overt)


def test_matches_protocol_mismatch_is_false_not_error():
    ipv4 = make_overt_packet(Protocol.IPV4, 0)
    tcp_tid = next(t.id for t in catalog() if t.protocol is Protocol.TCP)
    assert matches(tcp_tid, ipv4) is False


def test_apply_normalize_resets_carriers_and_kills_payload():
    table = build_rules(RuleAction.NORMALIZE)
    for t in catalog():
        covert = embed(t.id, make_overt_packet(t.protocol, 3), "1" * t.capacity_bits)
        out = apply_rule(table[t.id], covert)
        assert out.verdict is Verdict.NORMALIZED
        assert validate(out.packet) == []
        assert extract(t.id, out.packet) is None
        assert not matches(t.id, out.packet)
        for name, value in covert.fields.items():
            if name not in t.carrier_fields:
                assert out.packet.fields[name] == value


def test_apply_drop_returns_no_packet():
    table = build_rules(RuleAction.DROP)
    t = catalog()[0]
    covert = embed(t.id, make_overt_packet(t.protocol, 3), "1")
    out = apply_rule(table[t.id], covert)
    assert out.verdict is Verdict.DROPPED
    assert out.packet is None


def test_apply_on_non_matching_packet_is_error():
    overt = make_overt_packet(Protocol.IPV4, 0)
    with pytest.raises(NotMatchingError):
        apply_rule(rule(0), overt)


def test_outcome_shape_invariant():
    with pytest.raises(ValueError):
        RuleOutcome(verdict=Verdict.DROPPED, packet=make_overt_packet(Protocol.UDP, 0))
    with pytest.raises(ValueError):
        RuleOutcome(verdict=Verdict.FORWARDED, packet=None)


def test_normalized_packet_matches_no_rule_at_all():
    for t in catalog():
        covert = embed(t.id, make_overt_packet(t.protocol, 17), "1" * t.capacity_bits)
        cleaned = normalize_packet(t.id, covert)
        assert all(not matches(u.id, cleaned) for u in catalog())
