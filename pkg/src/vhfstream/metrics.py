"""Packet matching, bit-error counting and the joint BER / APSNR report.

Report CSV columns (schema version 1)::

    session_id, ber, bit_errors, bits_compared, packets_tx, packets_rx,
    packets_dropped, apsnr_db, frames_absent, acceptable_flag,
    packets_malformed, packets_truncated, packets_rx_only,
    packets_duplicate, length_mismatch, schema_version

Undefined BER or APSNR is written as the literal ``undefined``. Floats are
written with ``repr`` so they read back bit-exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, UndefinedMetricError
from .framing import SEQ_MODULUS, Discard, Packet
from .video import ACCEPTABLE_PSNR_DB, mean_psnr

SCHEMA_VERSION = 1
SEQ_WINDOW = SEQ_MODULUS // 2
ACCEPTABLE_BER = 1e-3
MISASSOCIATION_FRACTION = 0.25
UNDEFINED = "undefined"

REPORT_COLUMNS = (
    "session_id", "ber", "bit_errors", "bits_compared", "packets_tx", "packets_rx",
    "packets_dropped", "apsnr_db", "frames_absent", "acceptable_flag",
    "packets_malformed", "packets_truncated", "packets_rx_only", "packets_duplicate",
    "length_mismatch", "schema_version",
)


@dataclass
class MatchResult:
    pairs: list  # (tx index, rx index), ascending tx index
    tx_only: list
    rx_only: list
    duplicates: list
    tx_log: Sequence[Packet] = field(repr=False, default=())
    rx_log: Sequence[Packet] = field(repr=False, default=())

    @property
    def dropped(self) -> int:
        return len(self.tx_only)


@dataclass(frozen=True)
class BerResult:
    bit_errors: int
    bits_compared: int
    length_mismatch: int = 0

    @property
    def ber(self) -> float:
        if self.bits_compared == 0:
            raise UndefinedMetricError("no payload bits compared")
        return self.bit_errors / self.bits_compared


def _unwrap(seqs: Iterable[int]) -> list[int]:
    out, prev = [], None
    for s in seqs:
        if prev is None:
            u = s
        else:
            u = prev + ((s - prev + SEQ_WINDOW) % SEQ_MODULUS - SEQ_WINDOW)
        out.append(u)
        prev = u
    return out


def _distance(a: bytes, b: bytes) -> int:
    if len(a) != len(b):
        return 8 * max(len(a), len(b)) + 1
    x = np.frombuffer(a, dtype=np.uint8) ^ np.frombuffer(b, dtype=np.uint8)
    return int(np.bitwise_count(x).sum())


def match_packets(tx_log: Sequence[Packet], rx_log: Sequence[Packet], *, screen: bool = False,
                  max_error_fraction: float = MISASSOCIATION_FRACTION) -> MatchResult:
    """Pair received packets with transmitted ones by sequence number.

    Received sequence numbers are unwrapped relative to the last matched
    packet (window 2^15 either side), so sessions may exceed 2^16 packets
    as long as no gap of 2^15 goes unmatched. The first received copy of a
    sequence number wins; later copies count as duplicates, and numbers
    absent from the transmit log as ``rx_only``.

    With ``screen`` the transmit payloads are used to undo header
    corruption, which otherwise lets a damaged sequence number alias onto
    another packet: among copies of one number the closest in Hamming
    distance wins, and an equal-length pair disagreeing in more than
    ``max_error_fraction`` of its bits (unrelated payloads disagree in
    about half) is split, the transmit packet counting as lost and the
    received one as ``rx_only``.
    """
    tx_u = _unwrap(p.seq_num for p in tx_log)
    index_of: dict[int, int] = {}
    for i, u in enumerate(tx_u):
        index_of.setdefault(u, i)
    ref = tx_u[0] if tx_u else 0
    matched: dict[int, list] = {}  # tx index -> [rx index, distance or None]
    rx_only, duplicates = [], []
    for j, p in enumerate(rx_log):
        u = ref + ((p.seq_num - ref + SEQ_WINDOW) % SEQ_MODULUS - SEQ_WINDOW)
        i = index_of.get(u)
        if i is None:
            rx_only.append(j)
        elif i not in matched:
            matched[i] = [j, None]
            ref = u
        elif not screen:
            duplicates.append(j)
        else:
            want = tx_log[i].payload
            held = matched[i]
            if held[1] is None:
                held[1] = _distance(want, rx_log[held[0]].payload)
            dj = _distance(want, p.payload)
            if dj < held[1]:
                duplicates.append(held[0])
                matched[i] = [j, dj]
            else:
                duplicates.append(j)
    if screen:
        for i, (j, dj) in list(matched.items()):
            a, b = tx_log[i].payload, rx_log[j].payload
            if len(a) != len(b) or not a:
                continue
            if dj is None:
                dj = _distance(a, b)
            if dj > max_error_fraction * 8 * len(a):
                del matched[i]
                rx_only.append(j)
    pairs = sorted((i, j) for i, (j, _) in matched.items())
    tx_only = [i for i in range(len(tx_log)) if i not in matched]
    return MatchResult(pairs, tx_only, sorted(rx_only), sorted(duplicates), tx_log, rx_log)


def compute_ber(match: MatchResult) -> BerResult:
    """Hamming distance over matched payloads of equal length.

    Dropped packets do not enter the BER; they show up in the loss counters.
    """
    tx_parts, rx_parts, mismatch = [], [], 0
    for i, j in match.pairs:
        a, b = match.tx_log[i].payload, match.rx_log[j].payload
        if len(a) != len(b):
            mismatch += 1
            continue
        tx_parts.append(a)
        rx_parts.append(b)
    ta = np.frombuffer(b"".join(tx_parts), dtype=np.uint8)
    ra = np.frombuffer(b"".join(rx_parts), dtype=np.uint8)
    errors = int(np.bitwise_count(ta ^ ra).sum(dtype=np.int64))
    result = BerResult(errors, 8 * ta.size, mismatch)
    if result.bits_compared == 0:
        raise UndefinedMetricError("no matched packets with comparable payloads")
    return result


@dataclass
class LinkReport:
    session_id: str
    bits_compared: int
    bit_errors: int
    ber: float | None
    packets_tx: int
    packets_rx: int
    packets_dropped: int
    packets_malformed: int = 0
    packets_truncated: int = 0
    packets_rx_only: int = 0
    packets_duplicate: int = 0
    length_mismatch: int = 0
    apsnr_db: float | None = None
    frames_absent: int = 0
    psnr_series: list = field(default_factory=list)

    def __post_init__(self):
        if self.ber is not None and not 0.0 <= self.ber <= 1.0:
            raise ValueError("ber must lie in [0, 1]")

    @property
    def acceptable(self) -> bool:
        return self.apsnr_db is not None and self.apsnr_db >= ACCEPTABLE_PSNR_DB

    def to_row(self) -> dict:
        def num(v):
            return UNDEFINED if v is None else repr(float(v))

        return {
            "session_id": self.session_id,
            "ber": num(self.ber),
            "bit_errors": self.bit_errors,
            "bits_compared": self.bits_compared,
            "packets_tx": self.packets_tx,
            "packets_rx": self.packets_rx,
            "packets_dropped": self.packets_dropped,
            "apsnr_db": num(self.apsnr_db),
            "frames_absent": self.frames_absent,
            "acceptable_flag": int(self.acceptable),
            "packets_malformed": self.packets_malformed,
            "packets_truncated": self.packets_truncated,
            "packets_rx_only": self.packets_rx_only,
            "packets_duplicate": self.packets_duplicate,
            "length_mismatch": self.length_mismatch,
            "schema_version": SCHEMA_VERSION,
        }

    @classmethod
    def from_row(cls, row: dict) -> "LinkReport":
        def num(v):
            return None if v == UNDEFINED else float(v)

        try:
            if int(row["schema_version"]) != SCHEMA_VERSION:
                raise FormatError(f"unsupported report schema {row['schema_version']}")
            return cls(
                session_id=row["session_id"],
                bits_compared=int(row["bits_compared"]),
                bit_errors=int(row["bit_errors"]),
                ber=num(row["ber"]),
                packets_tx=int(row["packets_tx"]),
                packets_rx=int(row["packets_rx"]),
                packets_dropped=int(row["packets_dropped"]),
                packets_malformed=int(row["packets_malformed"]),
                packets_truncated=int(row["packets_truncated"]),
                packets_rx_only=int(row["packets_rx_only"]),
                packets_duplicate=int(row["packets_duplicate"]),
                length_mismatch=int(row["length_mismatch"]),
                apsnr_db=num(row["apsnr_db"]),
                frames_absent=int(row["frames_absent"]),
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad report row: {exc}") from exc


def build_report(
    match: MatchResult,
    ber: BerResult | None,
    psnr_series: list | None = None,
    *,
    session_id: str = "session",
    discards: Sequence[Discard] = (),
) -> LinkReport:
    """Assemble one report row. ``ber=None`` marks BER undefined (nothing matched)."""
    psnr_series = list(psnr_series or [])
    try:
        apsnr_db = mean_psnr(psnr_series)
    except UndefinedMetricError:
        apsnr_db = None
    if ber is not None and ber.bits_compared == 0:
        ber = None
    return LinkReport(
        session_id=session_id,
        bits_compared=ber.bits_compared if ber else 0,
        bit_errors=ber.bit_errors if ber else 0,
        ber=ber.ber if ber else None,
        packets_tx=len(match.tx_log),
        packets_rx=len(match.rx_log),
        packets_dropped=match.dropped,
        packets_malformed=sum(d.reason == "malformed" for d in discards),
        packets_truncated=sum(d.reason == "truncated" for d in discards),
        packets_rx_only=len(match.rx_only),
        packets_duplicate=len(match.duplicates),
        length_mismatch=ber.length_mismatch if ber else 0,
        apsnr_db=apsnr_db,
        frames_absent=sum(v is None for _, v in psnr_series),
        psnr_series=psnr_series,
    )


def write_reports_csv(path: str | Path, reports: Iterable[LinkReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.to_row())


def read_reports_csv(path: str | Path) -> list[LinkReport]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(REPORT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"report CSV lacks columns {sorted(missing)}")
        return [LinkReport.from_row(row) for row in reader]


def aligned_bit_errors(tx_bits, rx_bits, *, block: int = 2048, search: int = 8,
                       max_initial_lag: int = 2048) -> tuple[int, int, int]:
    """Count bit errors between a known transmit stream and a demodulated one.

    The receive stream is re-aligned every ``block`` bits (lag within
    +-``search`` of the previous block, either polarity), so timing slips
    and phase flips cost only the block they occur in. Returns
    ``(errors, bits_compared, realignments)``.
    """
    tx = np.asarray(tx_bits, dtype=np.uint8)
    rx = np.asarray(rx_bits, dtype=np.uint8)
    errors = compared = events = 0
    lag = None
    polarity = None
    for s in range(0, tx.size - block + 1, block):
        ref = tx[s:s + block]
        lags = range(-max_initial_lag, max_initial_lag + 1) if lag is None else range(lag - search, lag + search + 1)
        best = None
        for cand in lags:
            lo = s + cand
            if lo < 0 or lo + block > rx.size:
                continue
            e = int(np.count_nonzero(rx[lo:lo + block] != ref))
            for pol, err in ((1, e), (-1, block - e)):
                if best is None or err < best[0]:
                    best = (err, cand, pol)
        if best is None:
            break
        if lag is not None and (best[1] != lag or best[2] != polarity):
            events += 1
        errors += best[0]
        compared += block
        lag, polarity = best[1], best[2]
    return errors, compared, events
