import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vhfstream.errors import FormatError, UndefinedMetricError
from vhfstream.framing import Packet, PacketHeader
from vhfstream.metrics import (
    REPORT_COLUMNS, LinkReport, aligned_bit_errors, build_report, compute_ber, match_packets,
    read_reports_csv, write_reports_csv,
)


def pkt(seq, payload):
    return Packet(PacketHeader(1, len(payload), seq % 65536), bytes(payload))


def log(n, size=16, seed=0):
    rng = np.random.default_rng(seed)
    return [pkt(i, rng.integers(0, 256, size, dtype=np.uint8).tobytes()) for i in range(n)]


def test_identical_logs():
    tx = log(10)
    m = match_packets(tx, tx)
    assert len(m.pairs) == 10 and m.dropped == 0 and m.rx_only == [] and m.duplicates == []
    assert compute_ber(m).bit_errors == 0


def test_missing_and_phantom():
    tx = log(10)
    rx = [p for p in tx if p.seq_num not in (5, 6, 7)] + [pkt(500, b"x" * 16)]
    m = match_packets(tx, rx)
    assert m.tx_only == [5, 6, 7] and len(m.rx_only) == 1


def test_first_copy_wins_by_default():
    tx = log(3)
    bad = pkt(1, bytes(16))
    m = match_packets(tx, [tx[0], bad, tx[1], tx[2]])
    assert (1, 1) in m.pairs and m.duplicates == [2]


def test_screening_prefers_closest_copy_and_splits_aliases():
    tx = log(4, size=64)
    alias = pkt(2, tx[3].payload)  # header damaged: packet 3 claims seq 2
    rx = [tx[0], tx[1], alias, tx[2]]
    m = match_packets(tx, rx, screen=True)
    assert (2, 3) in m.pairs and m.duplicates == [2]
    m = match_packets(tx, [tx[0], tx[1], alias], screen=True)
    assert m.tx_only == [2, 3] and m.rx_only == [2]


def test_sequence_wrap():
    tx = [pkt(i, bytes([i % 256])) for i in range(70000)]
    keep = list(range(0, 65530, 1000)) + list(range(65530, 65545)) + [69999]
    m = match_packets(tx, [tx[i] for i in keep])
    assert [i for i, _ in m.pairs] == keep and m.rx_only == []


def test_one_flipped_bit():
    tx = [pkt(0, bytes(1000))]
    rx = [pkt(0, b"\x01" + bytes(999))]
    r = compute_ber(match_packets(tx, rx))
    assert (r.bit_errors, r.bits_compared, r.ber) == (1, 8000, 1 / 8000)


def test_length_mismatch_excluded():
    tx = log(2)
    rx = [tx[0], pkt(1, tx[1].payload[:8])]
    r = compute_ber(match_packets(tx, rx))
    assert r.length_mismatch == 1 and r.bits_compared == 128


def test_disjoint_logs_are_undefined():
    with pytest.raises(UndefinedMetricError):
        compute_ber(match_packets(log(3), [pkt(900, b"a")]))
    report = build_report(match_packets(log(3), [pkt(900, b"a")]), None, [(0, None)])
    row = report.to_row()
    assert row["ber"] == "undefined" and row["apsnr_db"] == "undefined" and row["acceptable_flag"] == 0


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(12)), st.integers(0, 1000))
def test_ber_permutation_invariant(order, seed):
    tx = log(12, seed=seed)
    rng = np.random.default_rng(seed)
    rx = []
    for p in tx:
        b = bytearray(p.payload)
        b[rng.integers(0, 16)] ^= 1 << int(rng.integers(0, 8))
        rx.append(pkt(p.seq_num, b))
    a = compute_ber(match_packets(tx, rx))
    b = compute_ber(match_packets(tx, [rx[i] for i in order]))
    assert (a.bit_errors, a.bits_compared) == (b.bit_errors, b.bits_compared) == (12, 12 * 128)


@settings(max_examples=30)
@given(st.lists(st.binary(min_size=1, max_size=20), min_size=1, max_size=8))
def test_zero_ber_iff_identical(payloads):
    tx = [pkt(i, p) for i, p in enumerate(payloads)]
    assert compute_ber(match_packets(tx, tx)).ber == 0
    rx = list(tx)
    rx[0] = pkt(0, bytes([payloads[0][0] ^ 0x10]) + payloads[0][1:])
    assert compute_ber(match_packets(tx, rx)).ber > 0


def test_report_csv_roundtrip(tmp_path):
    rep = build_report(match_packets(log(4), log(4)), compute_ber(match_packets(log(4), log(4))),
                       [(0, 100.0), (1, None)], session_id="s1")
    assert rep.apsnr_db == 100.0 and rep.frames_absent == 1 and rep.acceptable
    write_reports_csv(tmp_path / "r.csv", [rep])
    header = (tmp_path / "r.csv").read_text().splitlines()[0].split(",")
    assert tuple(header) == REPORT_COLUMNS
    (back,) = read_reports_csv(tmp_path / "r.csv")
    assert back.to_row() == rep.to_row()


def test_report_rejects_other_schema(tmp_path):
    rep = LinkReport("s", 8, 0, 0.0, 1, 1, 0)
    write_reports_csv(tmp_path / "r.csv", [rep])
    text = (tmp_path / "r.csv").read_text().replace(",1\n", ",2\n")
    (tmp_path / "r.csv").write_text(text)
    with pytest.raises(FormatError, match="schema"):
        read_reports_csv(tmp_path / "r.csv")


def test_aligned_bit_errors_survives_slips_and_inversion():
    rng = np.random.default_rng(3)
    tx = rng.integers(0, 2, 50_000).astype(np.uint8)
    rx = np.concatenate([rng.integers(0, 2, 37).astype(np.uint8), tx[:20000], tx[20001:]])
    rx[30000:] ^= 1
    rx[5000] ^= 1
    errors, compared, events = aligned_bit_errors(tx, rx)
    assert errors < 2048 and compared > 45000 and events >= 2
    assert aligned_bit_errors(tx, np.concatenate([np.zeros(5, np.uint8), tx]))[0] == 0
