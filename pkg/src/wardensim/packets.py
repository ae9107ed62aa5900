"""Structured model of overt network packets.

Packets are immutable records of named header fields, not wire-format byte
arrays: covert techniques and normalization rules both operate on named
fields, so nothing here serializes. Six protocols are supported, each with a
fixed descriptor table. Fields marked as naturally variable (identification
counters, initial sequence numbers, ...) are drawn from a structured subspace
of their range (e.g. multiples of 16) so that clean traffic never collides
with the value subspaces covert channels use.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from random import Random
from typing import Callable, Union

FieldValue = Union[int, tuple, str]


class Protocol(Enum):
    HTTP = "HTTP"
    TCP = "TCP"
    IPV4 = "IPV4"
    UDP = "UDP"
    SCTP = "SCTP"
    ICMP = "ICMP"


class FieldKind(Enum):
    NUMERIC = "numeric"
    TOKEN_LIST = "token-list"
    TEXT = "text"


class UnknownFieldError(KeyError):
    """Field name not present in the protocol's descriptor table."""


class ValueOutOfRangeError(ValueError):
    """Numeric field value does not fit the field's bit width."""


@dataclass(frozen=True)
class FieldDescriptor:
    """Shape and default of one header field.

    ``draw`` is set only for naturally variable fields; it produces an
    overt-looking value from a seeded generator.
    """

    name: str
    kind: FieldKind
    width_bits: int = 0
    normal_value: FieldValue = 0
    draw: Callable[[Random], int] | None = None


# Canonical HTTP header sets used by the token-list fields.
HTTP_HEADER_ORDER = ("host", "user-agent", "accept", "accept-language", "connection")
HTTP_HEADER_CASE = ("Host", "User-Agent", "Accept", "Accept-Language", "Connection")
HTTP_OPTIONAL_HEADERS = (
    "x-request-id",
    "dnt",
    "pragma",
    "upgrade-insecure-requests",
    "x-forwarded-for",
)
TCP_OPTION_ORDER = ("mss", "sackok", "ts", "nop", "wscale")


def _num(name: str, width: int, normal: int, draw: Callable[[Random], int] | None = None) -> FieldDescriptor:
    return FieldDescriptor(name, FieldKind.NUMERIC, width, normal, draw)


def _tokens(name: str, normal: tuple) -> FieldDescriptor:
    return FieldDescriptor(name, FieldKind.TOKEN_LIST, 0, normal)


def _text(name: str, normal: str) -> FieldDescriptor:
    return FieldDescriptor(name, FieldKind.TEXT, 0, normal)


# Natural subspaces: variable fields only take values with cleared low bits,
# so abnormal residues are unambiguously covert.
DESCRIPTORS: dict[Protocol, tuple[FieldDescriptor, ...]] = {
    Protocol.IPV4: (
        _num("ttl", 8, 64),
        _num("identification", 16, 0, lambda r: 16 * r.randrange(4096)),
        _num("df", 1, 1),
        _num("reserved_flag", 1, 0),
        _num("frag_offset", 13, 0),
        _num("tos", 8, 0),
        _tokens("options", ()),
    ),
    Protocol.TCP: (
        _num("seq", 32, 0, lambda r: 16 * r.randrange(2**28)),
        _num("ack", 32, 16, lambda r: 16 * r.randrange(1, 2**28)),
        _num("reserved", 4, 0),
        _num("urgent_ptr", 16, 0),
        _num("urg_flag", 1, 0),
        _num("window", 16, 8192, lambda r: 256 * r.randrange(1, 256)),
        _num("ts_val", 32, 0, lambda r: 32 * r.randrange(2**27)),
        _tokens("options", TCP_OPTION_ORDER),
    ),
    Protocol.UDP: (
        _num("checksum", 16, 16, lambda r: 16 * r.randrange(1, 4096)),
        _num("length_pad", 8, 0),
    ),
    Protocol.ICMP: (
        _num("type", 8, 8),
        _num("code", 8, 0),
        _num("id", 16, 0, lambda r: 16 * r.randrange(4096)),
        _num("seq", 16, 0, lambda r: 16 * r.randrange(4096)),
        _num("pad_len", 8, 0),
    ),
    Protocol.SCTP: (
        _num("verification_tag", 32, 16, lambda r: 16 * r.randrange(1, 2**28)),
        _num("chunk_flags", 8, 0),
    ),
    Protocol.HTTP: (
        _tokens("header_order", HTTP_HEADER_ORDER),
        _tokens("header_case", HTTP_HEADER_CASE),
        _tokens("optional_headers", ()),
        _text("delimiter_style", "crlf"),
    ),
}

_DESCRIPTOR_INDEX: dict[Protocol, dict[str, FieldDescriptor]] = {
    proto: {d.name: d for d in descs} for proto, descs in DESCRIPTORS.items()
}


def descriptor(protocol: Protocol, name: str) -> FieldDescriptor:
    try:
        return _DESCRIPTOR_INDEX[protocol][name]
    except KeyError:
        raise UnknownFieldError(f"{protocol.value} has no field {name!r}") from None


@dataclass(frozen=True, eq=True)
class Violation:
    kind: str  # "missing-field" | "extra-field" | "value-out-of-range" | "bad-type"
    field: str
    detail: str = ""


@dataclass(frozen=True)
class PacketHeaderSet:
    """One packet's header fields plus tracing metadata.

    Value semantics: ``set_field`` returns a new packet, the original is
    never mutated. Equality is structural.
    """

    protocol: Protocol
    fields: dict[str, FieldValue] = field(default_factory=dict)
    payload_len: int = 0
    seq_tag: int = 0

    def get(self, name: str) -> FieldValue:
        try:
            return self.fields[name]
        except KeyError:
            raise UnknownFieldError(f"{self.protocol.value} packet has no field {name!r}") from None


def make_overt_packet(protocol: Protocol, flow_seed: int) -> PacketHeaderSet:
    """Generate a clean packet: fixed fields at their normal value, naturally
    variable fields drawn deterministically from ``flow_seed``."""
    rng = Random(flow_seed)
    values: dict[str, FieldValue] = {}
    for desc in DESCRIPTORS[protocol]:
        values[desc.name] = desc.draw(rng) if desc.draw is not None else desc.normal_value
    return PacketHeaderSet(protocol=protocol, fields=values, seq_tag=flow_seed)


def _check_value(desc: FieldDescriptor, value: FieldValue) -> Violation | None:
    if desc.kind is FieldKind.NUMERIC:
        if not isinstance(value, int) or isinstance(value, bool):
            return Violation("bad-type", desc.name, f"expected int, got {type(value).__name__}")
        if not 0 <= value < (1 << desc.width_bits):
            return Violation("value-out-of-range", desc.name, f"{value} does not fit {desc.width_bits} bits")
    elif desc.kind is FieldKind.TOKEN_LIST:
        if not isinstance(value, tuple) or not all(isinstance(t, str) for t in value):
            return Violation("bad-type", desc.name, "expected tuple of str")
    else:
        if not isinstance(value, str):
            return Violation("bad-type", desc.name, "expected str")
    return None


def set_field(p: PacketHeaderSet, name: str, value: FieldValue) -> PacketHeaderSet:
    """Return a copy of ``p`` with one field replaced. Raises on unknown
    fields and on numeric values that do not fit the field width."""
    desc = descriptor(p.protocol, name)
    bad = _check_value(desc, value)
    if bad is not None and bad.kind == "value-out-of-range":
        raise ValueOutOfRangeError(bad.detail)
    if bad is not None:
        raise ValueOutOfRangeError(f"{name}: {bad.detail}")
    new_fields = dict(p.fields)
    new_fields[name] = value
    return replace(p, fields=new_fields)


def validate(p: PacketHeaderSet) -> list[Violation]:
    """Check the packet against its protocol's descriptor table. Violations
    are returned as data; an empty list means the packet is well formed."""
    out: list[Violation] = []
    table = _DESCRIPTOR_INDEX[p.protocol]
    for name in table:
        if name not in p.fields:
            out.append(Violation("missing-field", name))
    for name, value in p.fields.items():
        desc = table.get(name)
        if desc is None:
            out.append(Violation("extra-field", name))
            continue
        bad = _check_value(desc, value)
        if bad is not None:
            out.append(bad)
    if p.payload_len < 0:
        out.append(Violation("value-out-of-range", "payload_len", "negative"))
    return out


def format_packet(p: PacketHeaderSet) -> str:
    """One-line dump: ``<seq_tag> <protocol> field=value ...`` in descriptor
    order (stable across runs)."""
    parts = [str(p.seq_tag), p.protocol.value]
    for desc in DESCRIPTORS[p.protocol]:
        value = p.fields.get(desc.name, "<missing>")
        if isinstance(value, tuple):
            rendered = ",".join(value) if value else "-"
        else:
            rendered = str(value)
        parts.append(f"{desc.name}={rendered}")
    return " ".join(parts)
