"""Packet construction, preamble detection and header parsing.

Over-the-air layout (all multi-byte fields big-endian, bytes sent MSB first)::

    +----------------+-----------------+-------------+---------+-----------+
    | preamble (8 B) | bits/symbol (2) | payload len | seq num | payload   |
    +----------------+-----------------+-------------+---------+-----------+

The preamble is the 63-chip m-sequence of x^6 + x + 1 (Fibonacci register
seeded with all ones, output taken from the last stage) followed by one 0
chip, giving a balanced 64-bit word with aperiodic sidelobes of at most 7.
There is no header checksum; a header is rejected only when its payload
length exceeds ``max_payload``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import MalformedHeaderError, PayloadTooLongError, TruncatedError

PREAMBLE_WORD = 0xFD59BB49C5E51840
PREAMBLE_BYTES = PREAMBLE_WORD.to_bytes(8, "big")
PREAMBLE_BITS = np.unpackbits(np.frombuffer(PREAMBLE_BYTES, dtype=np.uint8))
PREAMBLE_LEN_BITS = 64

MAX_PAYLOAD = 1472
DEFAULT_THRESHOLD = 58
BPSK_BITS_PER_SYMBOL = 1

_FIELDS = struct.Struct(">HHH")
HEADER_LEN = len(PREAMBLE_BYTES) + _FIELDS.size  # 14
SEQ_MODULUS = 1 << 16


@dataclass(frozen=True)
class PacketHeader:
    bits_per_symbol: int
    payload_len: int
    seq_num: int

    @property
    def preamble(self) -> int:
        return PREAMBLE_WORD


@dataclass(frozen=True)
class Packet:
    header: PacketHeader
    payload: bytes
    # bit position of the preamble in the stream it was extracted from
    bit_offset: int | None = field(default=None, compare=False)

    @property
    def seq_num(self) -> int:
        return self.header.seq_num

    def to_bytes(self) -> bytes:
        return build_packet(self.payload, self.header.seq_num, self.header.bits_per_symbol)


@dataclass(frozen=True)
class PreambleHit:
    bit_offset: int
    polarity: int
    correlation: int


@dataclass(frozen=True)
class Discard:
    bit_offset: int
    reason: str  # "malformed" | "truncated"
    detail: str = ""


def packet_length(payload_len: int) -> int:
    """Serialized size in bytes of a packet carrying ``payload_len`` bytes."""
    return HEADER_LEN + payload_len


def build_packet(
    payload: bytes,
    seq_num: int,
    bits_per_symbol: int = BPSK_BITS_PER_SYMBOL,
    *,
    max_payload: int = MAX_PAYLOAD,
) -> bytes:
    payload = bytes(payload)
    if len(payload) > max_payload:
        raise PayloadTooLongError(
            f"payload of {len(payload)} bytes exceeds the {max_payload}-byte limit"
        )
    if not 0 <= bits_per_symbol < SEQ_MODULUS:
        raise ValueError("bits_per_symbol must fit in 16 bits")
    fields = _FIELDS.pack(bits_per_symbol, len(payload), seq_num % SEQ_MODULUS)
    return PREAMBLE_BYTES + fields + payload


def unpack_fields(block: bytes, *, max_payload: int = MAX_PAYLOAD) -> PacketHeader:
    """Decode the 6-byte field block that follows the preamble."""
    if len(block) < _FIELDS.size:
        raise TruncatedError(f"need {_FIELDS.size} header bytes, got {len(block)}")
    bps, length, seq = _FIELDS.unpack_from(block)
    if length > max_payload:
        raise MalformedHeaderError(
            f"payload_len {length} exceeds the {max_payload}-byte limit"
        )
    return PacketHeader(bits_per_symbol=bps, payload_len=length, seq_num=seq)


def parse_header(data: bytes, offset: int = 0, *, max_payload: int = MAX_PAYLOAD) -> PacketHeader:
    """Parse the header of the packet whose preamble starts at ``data[offset]``.

    The preamble bytes themselves are not checked; detection already
    established where the packet starts.
    """
    start = offset + len(PREAMBLE_BYTES)
    return unpack_fields(bytes(data[start:start + _FIELDS.size]), max_payload=max_payload)


def parse_packet(data: bytes, offset: int = 0, *, max_payload: int = MAX_PAYLOAD) -> Packet:
    """Inverse of :func:`build_packet`."""
    header = parse_header(data, offset, max_payload=max_payload)
    start = offset + HEADER_LEN
    payload = bytes(data[start:start + header.payload_len])
    if len(payload) != header.payload_len:
        raise TruncatedError(
            f"payload needs {header.payload_len} bytes, {len(payload)} available"
        )
    return Packet(header, payload)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits: np.ndarray) -> bytes:
    """Pack MSB-first; the bit count must be a multiple of 8."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise ValueError("bit count is not a multiple of 8")
    return np.packbits(bits).tobytes()


def preamble_correlation(bits: np.ndarray) -> np.ndarray:
    """Bipolar correlation of every 64-bit window against the preamble.

    Entry ``i`` is ``sum_k s(bits[i+k]) * s(preamble[k])`` with
    ``s(b) = 2b - 1``, an even integer in [-64, 64].
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size < PREAMBLE_LEN_BITS:
        return np.zeros(0, dtype=np.int64)
    x = 2.0 * bits - 1.0
    ref = 2.0 * PREAMBLE_BITS - 1.0
    corr = signal.correlate(x, ref, mode="valid")
    return np.rint(corr).astype(np.int64)


def detect_preambles(bits: np.ndarray, threshold: int = DEFAULT_THRESHOLD) -> list[PreambleHit]:
    if not 1 <= threshold <= PREAMBLE_LEN_BITS:
        raise ValueError("threshold must be in [1, 64]")
    corr = preamble_correlation(bits)
    idx = np.flatnonzero(np.abs(corr) >= threshold)
    return [
        PreambleHit(int(i), 1 if corr[i] > 0 else -1, int(corr[i])) for i in idx
    ]


def extract_packets(
    bits: np.ndarray,
    threshold: int = DEFAULT_THRESHOLD,
    *,
    max_payload: int = MAX_PAYLOAD,
) -> tuple[list[Packet], list[Discard]]:
    """Find, polarity-correct and slice every packet in a demodulated bit stream.

    Hits that fall inside an already accepted packet are skipped. Headers
    that fail the length bound and packets running past the end of the
    stream are returned as :class:`Discard` records.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    packets: list[Packet] = []
    discards: list[Discard] = []
    next_free = 0
    for hit in detect_preambles(bits, threshold):
        if hit.bit_offset < next_free:
            continue
        fields_start = hit.bit_offset + PREAMBLE_LEN_BITS
        fields_end = fields_start + 8 * _FIELDS.size
        if fields_end > n:
            discards.append(Discard(hit.bit_offset, "truncated", "header"))
            continue
        chunk = bits[fields_start:fields_end]
        if hit.polarity < 0:
            chunk = 1 - chunk
        try:
            header = unpack_fields(np.packbits(chunk).tobytes(), max_payload=max_payload)
        except MalformedHeaderError as exc:
            discards.append(Discard(hit.bit_offset, "malformed", str(exc)))
            continue
        end = fields_end + 8 * header.payload_len
        if end > n:
            discards.append(Discard(hit.bit_offset, "truncated", "payload"))
            continue
        body = bits[fields_end:end]
        if hit.polarity < 0:
            body = 1 - body
        packets.append(Packet(header, np.packbits(body).tobytes(), hit.bit_offset))
        next_free = end
    return packets, discards
