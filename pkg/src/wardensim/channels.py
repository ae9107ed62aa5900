"""Registry of the 51 storage covert-channel techniques.

Every technique owns one or more carrier fields of a single protocol and a
value subspace of those fields that clean traffic never produces. Payloads
are bit strings of up to ``capacity_bits``; internally a payload of length L
is carried as the marker integer ``m = 2^L + value`` (m >= 2), which makes
any nonempty payload distinguishable both from clean traffic and from the
empty payload. A packet that decodes under one technique decodes under no
other: subspaces are kept disjoint per field (different residue ranges,
guard fields, or token alphabets).

The successful-decode predicate doubles as the matching rule for the
normalizer (see :mod:`wardensim.rules`), which is what ties each channel to
exactly one rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .packets import (
    HTTP_HEADER_CASE,
    HTTP_HEADER_ORDER,
    HTTP_OPTIONAL_HEADERS,
    TCP_OPTION_ORDER,
    FieldValue,
    PacketHeaderSet,
    Protocol,
    set_field,
)


class ProtocolMismatchError(ValueError):
    """Packet protocol does not match the technique's protocol."""


class CapacityExceededError(ValueError):
    """Payload longer than the technique's per-packet capacity."""


class UnknownTechniqueError(KeyError):
    """No technique with the given id."""


Encoder = Callable[[PacketHeaderSet, int], PacketHeaderSet]
Decoder = Callable[[PacketHeaderSet], "int | None"]
Guard = Callable[[PacketHeaderSet], bool]


@dataclass(frozen=True)
class ChannelTechnique:
    id: int
    protocol: Protocol
    name: str
    carrier_fields: tuple[str, ...]
    capacity_bits: int
    description: str
    encode_marker: Encoder
    decode_marker: Decoder


def marker_from_bits(bits: str) -> int:
    """Length-prefixed marker for a nonempty bit string: ``2^len + value``."""
    if not bits or any(c not in "01" for c in bits):
        raise ValueError(f"payload must be a nonempty string of 0/1, got {bits!r}")
    return (1 << len(bits)) | int(bits, 2)


def bits_from_marker(m: int) -> str:
    length = m.bit_length() - 1
    return format(m - (1 << length), f"0{length}b")


def payload_bits(value: int, width: int) -> str:
    """Render an integer's low ``width`` bits; used for probe tokens and the
    communication-phase counter stream."""
    return format(value % (1 << width), f"0{width}b")


def _span(capacity: int) -> int:
    # markers run over [2, 2^(capacity+1) - 1]
    return (1 << (capacity + 1)) - 2


def _marker_max(capacity: int) -> int:
    return (1 << (capacity + 1)) - 1


def _offset_channel(
    field: str,
    base: int,
    capacity: int,
    *,
    step: int = 1,
    sets: tuple[tuple[str, FieldValue], ...] = (),
    guards: tuple[Guard, ...] = (),
) -> tuple[Encoder, Decoder]:
    """Field takes the absolute value ``base + step*(m-2)``; decoding requires
    the value to sit in that window and all guards to hold."""
    span = _span(capacity)

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        for name, value in sets:
            p = set_field(p, name, value)
        return set_field(p, field, base + step * (m - 2))

    def decode(p: PacketHeaderSet) -> int | None:
        for name, value in sets:
            if p.get(name) != value:
                return None
        for guard in guards:
            if not guard(p):
                return None
        q = step * (p.get(field) - base)  # step is +-1
        if not 0 <= q < span:
            return None
        return q + 2

    return encode, decode


def _residue_channel(
    field: str,
    modulus: int,
    base: int,
    capacity: int,
    *,
    sets: tuple[tuple[str, FieldValue], ...] = (),
    guards: tuple[Guard, ...] = (),
) -> tuple[Encoder, Decoder]:
    """Marker carried in ``value mod modulus`` while the natural high part is
    preserved; clean traffic keeps the residue at zero."""
    span = _span(capacity)

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        for name, value in sets:
            p = set_field(p, name, value)
        v = p.get(field)
        return set_field(p, field, v - v % modulus + base + (m - 2))

    def decode(p: PacketHeaderSet) -> int | None:
        for name, value in sets:
            if p.get(name) != value:
                return None
        for guard in guards:
            if not guard(p):
                return None
        r = p.get(field) % modulus
        if not base <= r < base + span:
            return None
        return r - base + 2

    return encode, decode


def _scaled_channel(field: str, scale: int, capacity: int) -> tuple[Encoder, Decoder]:
    """Field takes ``scale * m`` exactly; clean values are either smaller or
    not multiples of the scale above it."""
    top = _marker_max(capacity)

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        return set_field(p, field, scale * m)

    def decode(p: PacketHeaderSet) -> int | None:
        v = p.get(field)
        if v < 2 * scale or v % scale != 0 or v // scale > top:
            return None
        return v // scale

    return encode, decode


def _map_channel(
    field: str,
    mapping: dict[int, FieldValue],
    *,
    sets: tuple[tuple[str, FieldValue], ...] = (),
) -> tuple[Encoder, Decoder]:
    inverse = {v: k for k, v in mapping.items()}

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        for name, value in sets:
            p = set_field(p, name, value)
        return set_field(p, field, mapping[m])

    def decode(p: PacketHeaderSet) -> int | None:
        for name, value in sets:
            if p.get(name) != value:
                return None
        return inverse.get(p.get(field))

    return encode, decode


def _token_run_channel(field: str, token: str, length_of_marker: Callable[[int], int],
                       marker_of_length: Callable[[int], "int | None"],
                       prefix: tuple[str, ...] = ()) -> tuple[Encoder, Decoder]:
    """Covert value is ``prefix`` followed by a run of one repeated token; the
    run length carries the marker."""

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        return set_field(p, field, prefix + (token,) * length_of_marker(m))

    def decode(p: PacketHeaderSet) -> int | None:
        v = p.get(field)
        if not isinstance(v, tuple) or len(v) <= len(prefix):
            return None
        if tuple(v[: len(prefix)]) != prefix or any(t != token for t in v[len(prefix) :]):
            return None
        return marker_of_length(len(v) - len(prefix))

    return encode, decode


def perm_rank(seq: tuple[str, ...]) -> int:
    """Lexicographic rank of a permutation among all permutations of its
    sorted tokens."""
    tokens = sorted(seq)
    rank = 0
    fact = 1
    for i in range(2, len(tokens) + 1):
        fact *= i
    for item in seq:
        fact //= len(tokens)
        rank += tokens.index(item) * fact
        tokens.remove(item)
    return rank


def perm_unrank(sorted_tokens: tuple[str, ...], rank: int) -> tuple[str, ...]:
    tokens = list(sorted_tokens)
    fact = 1
    for i in range(2, len(tokens) + 1):
        fact *= i
    out = []
    for _ in range(len(sorted_tokens)):
        fact //= len(tokens)
        idx, rank = divmod(rank, fact)
        out.append(tokens.pop(idx))
    return tuple(out)


def _perm_channel(field: str, canonical: tuple[str, ...], index_base: int, capacity: int) -> tuple[Encoder, Decoder]:
    """Covert value is the permutation of the canonical token set whose
    lexicographic rank sits in a reserved window (the canonical order's own
    rank stays outside every window)."""
    sorted_tokens = tuple(sorted(canonical))
    span = _span(capacity)

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        return set_field(p, field, perm_unrank(sorted_tokens, index_base + (m - 2)))

    def decode(p: PacketHeaderSet) -> int | None:
        v = p.get(field)
        if not isinstance(v, tuple) or sorted(v) != list(sorted_tokens) or len(v) != len(canonical):
            return None
        rank = perm_rank(tuple(v))
        if not index_base <= rank < index_base + span:
            return None
        return rank - index_base + 2

    return encode, decode


def _case_mask_channel(field: str, canonical: tuple[str, ...], variant: Callable[[str], str],
                       capacity: int) -> tuple[Encoder, Decoder]:
    """Marker carried as a bitmask selecting which header names are restyled
    with ``variant`` (upper or lower casing)."""
    span = _span(capacity)

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        styled = tuple(
            variant(name) if (m >> i) & 1 else name for i, name in enumerate(canonical)
        )
        return set_field(p, field, styled)

    def decode(p: PacketHeaderSet) -> int | None:
        v = p.get(field)
        if not isinstance(v, tuple) or len(v) != len(canonical):
            return None
        mask = 0
        for i, (seen, name) in enumerate(zip(v, canonical)):
            if seen == name:
                continue
            if seen == variant(name):
                mask |= 1 << i
            else:
                return None
        if not 2 <= mask < 2 + span:
            return None
        return mask

    return encode, decode


def _subset_mask_channel(field: str, universe: tuple[str, ...], capacity: int) -> tuple[Encoder, Decoder]:
    """Marker carried as the presence bitmask of optional tokens, rendered in
    canonical order."""
    span = _span(capacity)

    def encode(p: PacketHeaderSet, m: int) -> PacketHeaderSet:
        chosen = tuple(name for i, name in enumerate(universe) if (m >> i) & 1)
        return set_field(p, field, chosen)

    def decode(p: PacketHeaderSet) -> int | None:
        v = p.get(field)
        if not isinstance(v, tuple):
            return None
        mask = 0
        cursor = 0
        for token in v:
            try:
                idx = universe.index(token, cursor)
            except ValueError:
                return None
            mask |= 1 << idx
            cursor = idx + 1
        if not 2 <= mask < 2 + span:
            return None
        return mask

    return encode, decode


def _urg_zero(p: PacketHeaderSet) -> bool:
    return p.get("urg_flag") == 0


def _ack_natural(p: PacketHeaderSet) -> bool:
    return p.get("ack") >= 16


def _checksum_natural(p: PacketHeaderSet) -> bool:
    return p.get("checksum") >= 16


def _checksum_nonzero(p: PacketHeaderSet) -> bool:
    return p.get("checksum") != 0


def _flags_zero(p: PacketHeaderSet) -> bool:
    return p.get("chunk_flags") == 0


def _vtag_natural(p: PacketHeaderSet) -> bool:
    return p.get("verification_tag") >= 16


def _df_set(p: PacketHeaderSet) -> bool:
    return p.get("df") == 1


def _type_echo(p: PacketHeaderSet) -> bool:
    return p.get("type") == 8


_DELIMITER_STYLES = {2: "lf", 3: "cr", 4: "crlf-sp", 5: "lf-sp", 6: "cr-sp", 7: "tab"}


def _build_catalog() -> tuple[ChannelTechnique, ...]:
    entries: list[ChannelTechnique] = []

    def add(protocol: Protocol, name: str, carriers: tuple[str, ...], capacity: int,
            description: str, coders: tuple[Encoder, Decoder]) -> None:
        entries.append(
            ChannelTechnique(
                id=len(entries),
                protocol=protocol,
                name=name,
                carrier_fields=carriers,
                capacity_bits=capacity,
                description=description,
                encode_marker=coders[0],
                decode_marker=coders[1],
            )
        )

    ip = Protocol.IPV4
    add(ip, "ipv4-ttl-up", ("ttl",), 2, "TTL raised just above the overt default",
        _offset_channel("ttl", 66, 2))
    add(ip, "ipv4-ttl-down", ("ttl",), 2, "TTL lowered just below the overt default",
        _offset_channel("ttl", 62, 2, step=-1))
    add(ip, "ipv4-ttl-parity", ("ttl",), 1, "TTL nudged to an off-by-one value",
        _map_channel("ttl", {2: 63, 3: 65}))
    add(ip, "ipv4-ttl-high", ("ttl",), 3, "TTL moved into a foreign-stack range",
        _offset_channel("ttl", 130, 3))
    add(ip, "ipv4-id-lsb", ("identification",), 3, "identification low bits reused as payload",
        _residue_channel("identification", 16, 2, 3))
    add(ip, "ipv4-df-clear", ("df", "frag_offset"), 2, "DF cleared with a phantom fragment offset",
        _offset_channel("frag_offset", 2, 2, sets=(("df", 0),)))
    add(ip, "ipv4-reserved-flag", ("reserved_flag", "frag_offset"), 2,
        "reserved flag set with an offset marker",
        _offset_channel("frag_offset", 16, 2, sets=(("reserved_flag", 1),)))
    add(ip, "ipv4-frag-with-df", ("frag_offset",), 3, "fragment offset present although DF is set",
        _offset_channel("frag_offset", 32, 3, guards=(_df_set,)))
    add(ip, "ipv4-tos-low", ("tos",), 3, "nonstandard low ToS codepoints",
        _offset_channel("tos", 2, 3))
    add(ip, "ipv4-tos-dscp", ("tos",), 3, "payload in unused DSCP codepoints",
        _scaled_channel("tos", 16, 3))
    add(ip, "ipv4-options-pad", ("options",), 2, "run of no-op IP options",
        _token_run_channel("options", "nop", lambda m: m, lambda n: n if 2 <= n <= 7 else None))
    add(ip, "ipv4-options-order", ("options",), 2, "security option followed by no-op padding",
        _token_run_channel("options", "nop", lambda m: m - 1,
                           lambda n: n + 1 if 1 <= n <= 6 else None, prefix=("sec",)))

    tcp = Protocol.TCP
    add(tcp, "tcp-reserved-bits", ("reserved",), 3, "payload in the reserved header bits",
        _offset_channel("reserved", 2, 3))
    add(tcp, "tcp-urgptr-low", ("urgent_ptr",), 4, "urgent pointer set while URG is clear",
        _offset_channel("urgent_ptr", 2, 4, guards=(_urg_zero,)))
    add(tcp, "tcp-urgptr-scaled", ("urgent_ptr",), 3, "urgent pointer carrying page-aligned payload",
        _scaled_channel("urgent_ptr", 256, 3))
    add(tcp, "tcp-urg-flag", ("urg_flag", "urgent_ptr"), 3, "URG set with an out-of-band pointer window",
        _offset_channel("urgent_ptr", 4098, 3, sets=(("urg_flag", 1),)))
    add(tcp, "tcp-isn-lsb", ("seq",), 3, "initial sequence number low bits",
        _residue_channel("seq", 16, 2, 3))
    add(tcp, "tcp-ack-lsb", ("ack",), 3, "acknowledgement number low bits",
        _residue_channel("ack", 16, 2, 3, guards=(_ack_natural,)))
    add(tcp, "tcp-ack-zero-page", ("ack",), 3, "acknowledgement collapsed to a tiny absolute value",
        _offset_channel("ack", 2, 3))
    add(tcp, "tcp-window-lsb", ("window",), 4, "window low byte, bottom range",
        _residue_channel("window", 256, 2, 4))
    add(tcp, "tcp-window-mid", ("window",), 4, "window low byte, middle range",
        _residue_channel("window", 256, 64, 4))
    add(tcp, "tcp-window-high", ("window",), 4, "window low byte, upper range",
        _residue_channel("window", 256, 130, 4))
    add(tcp, "tcp-tsval-lsb", ("ts_val",), 2, "timestamp value low bits, bottom range",
        _residue_channel("ts_val", 32, 2, 2))
    add(tcp, "tcp-tsval-mid", ("ts_val",), 3, "timestamp value low bits, upper range",
        _residue_channel("ts_val", 32, 8, 3))
    add(tcp, "tcp-option-order", ("options",), 4, "option list permuted away from the canonical order",
        _perm_channel("options", TCP_OPTION_ORDER, 32, 4))
    add(tcp, "tcp-option-pad", ("options",), 4, "canonical options trailed by no-op padding",
        _token_run_channel("options", "nop", lambda m: m - 1,
                           lambda n: n + 1 if 1 <= n <= 30 else None, prefix=TCP_OPTION_ORDER))

    udp = Protocol.UDP
    add(udp, "udp-checksum-lsb", ("checksum",), 3, "checksum low bits reused as payload",
        _residue_channel("checksum", 16, 2, 3, guards=(_checksum_natural,)))
    add(udp, "udp-checksum-small", ("checksum",), 3, "checksum collapsed to a tiny absolute value",
        _offset_channel("checksum", 2, 3))
    add(udp, "udp-checksum-zero", ("checksum", "length_pad"), 2, "checksum disabled with a pad marker",
        _offset_channel("length_pad", 2, 2, sets=(("checksum", 0),)))
    add(udp, "udp-length-pad", ("length_pad",), 3, "datagram padded by a small length",
        _offset_channel("length_pad", 2, 3, guards=(_checksum_nonzero,)))
    add(udp, "udp-length-pad-scaled", ("length_pad",), 3, "datagram padded in 16-byte blocks",
        _scaled_channel("length_pad", 16, 3))

    icmp = Protocol.ICMP
    add(icmp, "icmp-id-lsb", ("id",), 3, "echo identifier low bits",
        _residue_channel("id", 16, 2, 3))
    add(icmp, "icmp-seq-lsb", ("seq",), 3, "echo sequence number low bits",
        _residue_channel("seq", 16, 2, 3))
    add(icmp, "icmp-echo-code", ("code",), 3, "echo request with a nonzero code",
        _offset_channel("code", 2, 3, guards=(_type_echo,)))
    add(icmp, "icmp-type-timestamp", ("type", "code"), 3, "timestamp request with payload in code",
        _offset_channel("code", 0, 3, sets=(("type", 13),)))
    add(icmp, "icmp-type-info", ("type", "code"), 3, "obsolete info request with payload in code",
        _offset_channel("code", 0, 3, sets=(("type", 15),)))
    add(icmp, "icmp-type-mask", ("type", "code"), 3, "address mask request with payload in code",
        _offset_channel("code", 0, 3, sets=(("type", 17),)))
    add(icmp, "icmp-pad-len", ("pad_len",), 3, "payload padding by a small length",
        _offset_channel("pad_len", 2, 3))
    add(icmp, "icmp-pad-len-scaled", ("pad_len",), 3, "payload padding in 16-byte blocks",
        _scaled_channel("pad_len", 16, 3))

    sctp = Protocol.SCTP
    add(sctp, "sctp-vtag-lsb", ("verification_tag",), 3, "verification tag low bits",
        _residue_channel("verification_tag", 16, 2, 3, guards=(_flags_zero, _vtag_natural)))
    add(sctp, "sctp-vtag-zero-page", ("verification_tag",), 3,
        "verification tag collapsed to a tiny absolute value",
        _offset_channel("verification_tag", 2, 3))
    add(sctp, "sctp-chunk-flags", ("chunk_flags",), 3, "payload in unused chunk flag bits",
        _offset_channel("chunk_flags", 2, 3))
    add(sctp, "sctp-chunk-flags-scaled", ("chunk_flags",), 3, "chunk flags set in 16-step codepoints",
        _scaled_channel("chunk_flags", 16, 3))
    add(sctp, "sctp-vtag-flagged", ("verification_tag", "chunk_flags"), 3,
        "tag low bits combined with a sentinel chunk flag",
        _residue_channel("verification_tag", 16, 2, 3, sets=(("chunk_flags", 1),)))

    http = Protocol.HTTP
    add(http, "http-header-order-a", ("header_order",), 4, "header order permuted, window A",
        _perm_channel("header_order", HTTP_HEADER_ORDER, 2, 4))
    add(http, "http-header-order-b", ("header_order",), 4, "header order permuted, window B",
        _perm_channel("header_order", HTTP_HEADER_ORDER, 32, 4))
    add(http, "http-header-case-upper", ("header_case",), 4, "selected header names fully upper-cased",
        _case_mask_channel("header_case", HTTP_HEADER_CASE, str.upper, 4))
    add(http, "http-header-case-lower", ("header_case",), 4, "selected header names fully lower-cased",
        _case_mask_channel("header_case", HTTP_HEADER_CASE, str.lower, 4))
    add(http, "http-optional-present", ("optional_headers",), 4, "optional headers present as a bitmask",
        _subset_mask_channel("optional_headers", HTTP_OPTIONAL_HEADERS, 4))
    add(http, "http-optional-repeat", ("optional_headers",), 2, "one hop header repeated as a run",
        _token_run_channel("optional_headers", "via", lambda m: m,
                           lambda n: n if 2 <= n <= 7 else None))
    add(http, "http-delimiter-style", ("delimiter_style",), 2, "nonstandard line delimiter variants",
        _map_channel("delimiter_style", _DELIMITER_STYLES))

    assert len(entries) == 51
    return tuple(entries)


_CATALOG: tuple[ChannelTechnique, ...] = _build_catalog()
_BY_PROTOCOL: dict[Protocol, tuple[ChannelTechnique, ...]] = {
    proto: tuple(t for t in _CATALOG if t.protocol is proto) for proto in Protocol
}


def catalog() -> tuple[ChannelTechnique, ...]:
    """All 51 techniques in stable id order."""
    return _CATALOG


def technique(tid: int) -> ChannelTechnique:
    if not 0 <= tid < len(_CATALOG):
        raise UnknownTechniqueError(f"no technique with id {tid}")
    return _CATALOG[tid]


def techniques_for(protocol: Protocol) -> tuple[ChannelTechnique, ...]:
    return _BY_PROTOCOL[protocol]


def embed(tid: int, p: PacketHeaderSet, bits: str) -> PacketHeaderSet:
    """Hide ``bits`` in packet ``p`` using technique ``tid``. The empty
    payload is the identity; everything else lands in the carrier fields."""
    t = technique(tid)
    if p.protocol is not t.protocol:
        raise ProtocolMismatchError(
            f"technique {t.name} expects {t.protocol.value}, got {p.protocol.value}"
        )
    if len(bits) > t.capacity_bits:
        raise CapacityExceededError(
            f"{len(bits)} bits exceed capacity {t.capacity_bits} of {t.name}"
        )
    if not bits:
        return p
    return t.encode_marker(p, marker_from_bits(bits))


def extract(tid: int, p: PacketHeaderSet) -> str | None:
    """Recover the payload embedded by ``embed(tid, ...)``, or None when the
    packet carries nothing under this technique."""
    t = technique(tid)
    if p.protocol is not t.protocol:
        raise ProtocolMismatchError(
            f"technique {t.name} expects {t.protocol.value}, got {p.protocol.value}"
        )
    m = t.decode_marker(p)
    return None if m is None else bits_from_marker(m)


def decode_any(p: PacketHeaderSet) -> tuple[int, str] | None:
    """Scan the packet's protocol techniques for a successful decode. Returns
    ``(technique_id, bits)`` for the first (and, by the uniqueness law, only)
    hit."""
    for t in _BY_PROTOCOL[p.protocol]:
        m = t.decode_marker(p)
        if m is not None:
            return t.id, bits_from_marker(m)
    return None


def format_channel_line(t: ChannelTechnique) -> str:
    """`list-channels` line: id, protocol, carriers, capacity, description."""
    carriers = ",".join(t.carrier_fields)
    return f"{t.id}\t{t.protocol.value}\t{carriers}\t{t.capacity_bits}\t{t.description}"
