import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vhfstream import framing
from vhfstream.errors import MalformedHeaderError, PayloadTooLongError, TruncatedError
from vhfstream.framing import (
    HEADER_LEN, MAX_PAYLOAD, PREAMBLE_BITS, PREAMBLE_WORD, Packet, PacketHeader, build_packet,
    bytes_to_bits, detect_preambles, extract_packets, parse_packet,
)


def _lfsr_x6_x_1():
    # independent generator: Fibonacci register for x^6 + x + 1, all-ones seed
    reg = [1] * 6
    out = []
    for _ in range(63):
        out.append(reg[-1])
        fb = reg[5] ^ reg[0]
        reg = [fb] + reg[:-1]
    return out


def test_preamble_is_msequence_plus_zero():
    bits = _lfsr_x6_x_1() + [0]
    assert int("".join(map(str, bits)), 2) == PREAMBLE_WORD


def test_preamble_balanced_with_low_sidelobes():
    s = 2 * PREAMBLE_BITS.astype(int) - 1
    assert s.sum() == 0
    ac = np.correlate(s, s, mode="full")
    assert ac[63] == 64
    assert np.max(np.abs(np.delete(ac, 63))) <= 7


def test_header_layout():
    pkt = build_packet(b"\x01\x02", 0x1234)
    assert pkt == bytes.fromhex("fd59bb49c5e51840") + bytes.fromhex("0001 0002 1234".replace(" ", "")) + b"\x01\x02"
    assert len(pkt) == HEADER_LEN + 2


def test_seq_wraps_modulo_16_bits():
    assert parse_packet(build_packet(b"x", 70000)).seq_num == 70000 - 65536


def test_payload_too_long():
    with pytest.raises(PayloadTooLongError):
        build_packet(bytes(MAX_PAYLOAD + 1), 0)
    assert len(build_packet(bytes(MAX_PAYLOAD), 0)) == HEADER_LEN + MAX_PAYLOAD


def test_parse_rejects_bad_length_and_truncation():
    bad = bytearray(build_packet(b"abc", 1))
    bad[10:12] = (MAX_PAYLOAD + 1).to_bytes(2, "big")
    with pytest.raises(MalformedHeaderError):
        parse_packet(bytes(bad))
    with pytest.raises(TruncatedError):
        parse_packet(build_packet(b"abcdef", 1)[:-1])


@given(st.binary(max_size=300), st.integers(0, 65535))
def test_build_parse_roundtrip(payload, seq):
    p = parse_packet(build_packet(payload, seq))
    assert p == Packet(PacketHeader(1, len(payload), seq), payload)


def _stream(payloads, gap_seed=0):
    rng = np.random.default_rng(gap_seed)
    parts = []
    for i, p in enumerate(payloads):
        parts.append(np.zeros(int(rng.integers(0, 40)), np.uint8))
        parts.append(bytes_to_bits(build_packet(p, i)))
    parts.append(np.zeros(17, np.uint8))
    return np.concatenate(parts)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.binary(min_size=1, max_size=64), min_size=1, max_size=6), st.integers(0, 2**16))
def test_extract_recovers_all_packets(payloads, seed):
    packets, discards = extract_packets(_stream(payloads, seed))
    assert [p.payload for p in packets] == payloads
    assert [p.seq_num for p in packets] == list(range(len(payloads)))
    assert discards == []


@settings(max_examples=40, deadline=None)
@given(st.lists(st.binary(min_size=1, max_size=64), min_size=1, max_size=6), st.integers(0, 2**16))
def test_polarity_invariance(payloads, seed):
    bits = _stream(payloads, seed)
    assert extract_packets(1 - bits)[0] == extract_packets(bits)[0]


def test_bit_offsets_reported():
    bits = np.concatenate([np.zeros(13, np.uint8), bytes_to_bits(build_packet(b"hi", 3))])
    (hit,) = detect_preambles(bits)
    assert (hit.bit_offset, hit.polarity, hit.correlation) == (13, 1, 64)
    assert extract_packets(bits)[0][0].bit_offset == 13


def test_detection_tolerates_a_few_preamble_errors():
    bits = bytes_to_bits(build_packet(b"ok", 9))
    bits[[2, 20, 40]] ^= 1  # correlation 64 - 2*3 = 58
    assert extract_packets(bits, 58)[0][0].payload == b"ok"
    assert extract_packets(bits, 60)[0] == []


def test_discards_truncated_and_malformed():
    good = bytes_to_bits(build_packet(b"abcdef", 1))
    packets, discards = extract_packets(good[:-8])
    assert packets == [] and [d.reason for d in discards] == ["truncated"]

    bad = bytearray(build_packet(b"abc", 2))
    bad[10:12] = (4000).to_bytes(2, "big")
    packets, discards = extract_packets(np.concatenate([bytes_to_bits(bytes(bad)), good]))
    assert [d.reason for d in discards] == ["malformed"]
    assert [p.payload for p in packets] == [b"abcdef"]


def test_threshold_bounds():
    with pytest.raises(ValueError):
        detect_preambles(np.zeros(100, np.uint8), 0)
    with pytest.raises(ValueError):
        detect_preambles(np.zeros(100, np.uint8), 65)


def test_short_stream_has_no_hits():
    assert framing.preamble_correlation(np.ones(10, np.uint8)).size == 0
    assert extract_packets(np.ones(10, np.uint8)) == ([], [])


def test_bits_to_bytes_requires_whole_bytes():
    with pytest.raises(ValueError):
        framing.bits_to_bytes(np.ones(9, np.uint8))
    assert framing.bits_to_bytes(bytes_to_bits(b"\xa5\x0f")) == b"\xa5\x0f"
