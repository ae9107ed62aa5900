from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from wardensim.channels import (
    CapacityExceededError,
    ProtocolMismatchError,
    catalog,
    decode_any,
    embed,
    extract,
    format_channel_line,
    technique,
)
from wardensim.packets import Protocol, make_overt_packet, validate
from wardensim.rules import matches


def all_payloads(capacity: int):
    for length in range(1, capacity + 1):
        for value in range(2**length):
            yield format(value, f"0{length}b")


def test_catalog_has_51_dense_ids():
    cat = catalog()
    assert len(cat) == 51
    assert [t.id for t in cat] == list(range(51))


def test_catalog_covers_all_six_protocols():
    present = {t.protocol for t in catalog()}
    assert present == set(Protocol)


def test_catalog_stable_across_calls():
    assert catalog() is catalog()
    assert [t.name for t in catalog()] == [t.name for t in catalog()]


def test_capacities_within_bounds():
    assert all(1 <= t.capacity_bits <= 4 for t in catalog())


def test_carrier_fields_subset_of_descriptor_table():
    from wardensim.packets import DESCRIPTORS

    for t in catalog():
        table = {d.name for d in DESCRIPTORS[t.protocol]}
        assert set(t.carrier_fields) <= table


def test_ttl_nudge_example():
    # single-bit payload on the off-by-one TTL channel lands on 65
    p = make_overt_packet(Protocol.IPV4, 0)
    q = embed(2, p, "1")
    assert q.fields["ttl"] == 65
    assert extract(2, q) == "1"


@pytest.mark.parametrize("tid", range(51))
def test_round_trip_exhaustive(tid):
    t = technique(tid)
    p = make_overt_packet(t.protocol, 7)
    for bits in all_payloads(t.capacity_bits):
        q = embed(tid, p, bits)
        assert validate(q) == []
        assert extract(tid, q) == bits


@pytest.mark.parametrize("tid", range(51))
def test_embed_touches_only_carrier_fields(tid):
    t = technique(tid)
    p = make_overt_packet(t.protocol, 21)
    q = embed(tid, p, "1" * t.capacity_bits)
    for name, value in p.fields.items():
        if name not in t.carrier_fields:
            assert q.fields[name] == value


def test_embed_empty_payload_is_identity():
    p = make_overt_packet(Protocol.TCP, 5)
    assert embed(12, p, "") == p


def test_extract_on_overt_returns_none():
    for t in catalog():
        p = make_overt_packet(t.protocol, 99)
        assert extract(t.id, p) is None


def test_protocol_mismatch_raises():
    ipv4 = make_overt_packet(Protocol.IPV4, 0)
    tcp_tid = next(t.id for t in catalog() if t.protocol is Protocol.TCP)
    with pytest.raises(ProtocolMismatchError):
        embed(tcp_tid, ipv4, "1")
    with pytest.raises(ProtocolMismatchError):
        extract(tcp_tid, ipv4)


def test_capacity_exceeded_raises():
    t = technique(2)  # capacity 1
    p = make_overt_packet(t.protocol, 0)
    with pytest.raises(CapacityExceededError):
        embed(t.id, p, "10")


def test_decode_any_finds_unique_technique():
    t = technique(19)
    p = embed(t.id, make_overt_packet(t.protocol, 4), "1011")
    assert decode_any(p) == (t.id, "1011")
    assert decode_any(make_overt_packet(Protocol.UDP, 4)) is None


def test_normalized_packet_extracts_nothing():
    # ties the catalog to the rule set: the matching rule's normalizer kills
    # the payload
    from wardensim.rules import RuleAction, apply_rule, build_rules

    table = build_rules(RuleAction.NORMALIZE)
    for t in catalog():
        p = embed(t.id, make_overt_packet(t.protocol, 11), "1" * t.capacity_bits)
        out = apply_rule(table[t.id], p)
        assert extract(t.id, out.packet) is None


def test_overt_silence_across_many_seeds():
    for seed in range(25):
        for proto in Protocol:
            p = make_overt_packet(proto, seed)
            assert decode_any(p) is None


def test_list_channels_line_format():
    line = format_channel_line(technique(0))
    cols = line.split("\t")
    assert len(cols) == 5
    assert cols[0] == "0"
    assert cols[1] == "IPV4"


@given(data=st.data())
def test_round_trip_random(data):
    tid = data.draw(st.integers(min_value=0, max_value=50))
    t = technique(tid)
    seed = data.draw(st.integers(min_value=0, max_value=2**20))
    length = data.draw(st.integers(min_value=1, max_value=t.capacity_bits))
    bits = "".join(data.draw(st.sampled_from("01")) for _ in range(length))
    p = make_overt_packet(t.protocol, seed)
    q = embed(tid, p, bits)
    assert extract(tid, q) == bits
    assert matches(tid, q)
    assert not matches(tid, p)
