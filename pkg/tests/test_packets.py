from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from wardensim.packets import (
    DESCRIPTORS,
    FieldKind,
    PacketHeaderSet,
    Protocol,
    UnknownFieldError,
    ValueOutOfRangeError,
    format_packet,
    make_overt_packet,
    set_field,
    validate,
)


def test_exactly_six_protocols():
    assert {p.value for p in Protocol} == {"HTTP", "TCP", "IPV4", "UDP", "SCTP", "ICMP"}
    assert set(DESCRIPTORS) == set(Protocol)


def test_overt_ipv4_defaults():
    p = make_overt_packet(Protocol.IPV4, 0)
    assert p.fields["ttl"] == 64
    assert p.fields["df"] == 1
    assert p.fields["reserved_flag"] == 0
    assert validate(p) == []


def test_overt_tcp_reserved_bits_zero():
    p = make_overt_packet(Protocol.TCP, 0)
    assert p.fields["reserved"] == 0


def test_overt_determinism_equal_seed():
    a = make_overt_packet(Protocol.ICMP, 7)
    b = make_overt_packet(Protocol.ICMP, 7)
    assert a == b


@pytest.mark.parametrize("protocol", list(Protocol))
@pytest.mark.parametrize("seed", [0, 1, 17, 123456])
def test_overt_packets_always_valid(protocol, seed):
    assert validate(make_overt_packet(protocol, seed)) == []


def test_set_field_returns_new_packet():
    p = make_overt_packet(Protocol.IPV4, 0)
    q = set_field(p, "ttl", 65)
    assert q.fields["ttl"] == 65
    assert p.fields["ttl"] == 64
    assert {k: v for k, v in q.fields.items() if k != "ttl"} == {
        k: v for k, v in p.fields.items() if k != "ttl"
    }


def test_set_field_rejects_out_of_range():
    p = make_overt_packet(Protocol.IPV4, 0)
    with pytest.raises(ValueOutOfRangeError):
        set_field(p, "ttl", 300)


def test_set_field_rejects_unknown_field():
    p = make_overt_packet(Protocol.TCP, 0)
    with pytest.raises(UnknownFieldError):
        set_field(p, "bogus", 1)


def test_validate_flags_missing_field():
    p = make_overt_packet(Protocol.UDP, 0)
    broken = PacketHeaderSet(protocol=p.protocol,
                             fields={k: v for k, v in p.fields.items() if k != "checksum"})
    kinds = [v.kind for v in validate(broken)]
    assert "missing-field" in kinds


def test_validate_flags_out_of_range():
    p = make_overt_packet(Protocol.IPV4, 0)
    broken = PacketHeaderSet(protocol=p.protocol, fields={**p.fields, "ttl": 256})
    kinds = [v.kind for v in validate(broken)]
    assert "value-out-of-range" in kinds


def test_validate_flags_extra_field():
    p = make_overt_packet(Protocol.SCTP, 0)
    broken = PacketHeaderSet(protocol=p.protocol, fields={**p.fields, "alien": 1})
    kinds = [v.kind for v in validate(broken)]
    assert "extra-field" in kinds


def test_format_packet_stable_field_order():
    p = make_overt_packet(Protocol.IPV4, 3)
    line = format_packet(p)
    assert line.startswith("3 IPV4 ttl=64 ")
    names = [part.split("=")[0] for part in line.split()[2:]]
    assert names == [d.name for d in DESCRIPTORS[Protocol.IPV4]]


_numeric_fields = [
    (proto, desc) for proto, descs in DESCRIPTORS.items()
    for desc in descs if desc.kind is FieldKind.NUMERIC
]


@given(data=st.data())
def test_set_field_preserves_validity_or_raises(data):
    proto, desc = data.draw(st.sampled_from(_numeric_fields))
    seed = data.draw(st.integers(min_value=0, max_value=2**16))
    value = data.draw(st.integers(min_value=-2, max_value=2**desc.width_bits + 2))
    p = make_overt_packet(proto, seed)
    if 0 <= value < 2**desc.width_bits:
        assert validate(set_field(p, desc.name, value)) == []
    else:
        with pytest.raises(ValueOutOfRangeError):
            set_field(p, desc.name, value)
