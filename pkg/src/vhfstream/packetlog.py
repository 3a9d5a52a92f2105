"""Packet log files.

Binary layout, little-endian::

    file header   magic "NLPK" | version u16 | reserved u16          (8 bytes)
    record        body_len u32 | kind u8 | capture_index u64 |
                  seq_num u16 | data_len u16 | data[data_len]

``body_len`` counts every byte after itself (13 + data_len). ``kind`` is
0 for a transmitted packet, 1 for a received packet and 2 for a receiver
discard, whose ``data`` is the UTF-8 reason ("malformed" / "truncated").
``capture_index`` is the packet ordinal for tx records and the bit offset
of the preamble in the demodulated stream for rx and discard records.

The CSV variant carries the same columns with the data hex-encoded.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import FormatError

MAGIC = b"NLPK"
VERSION = 1
_FILE_HEADER = struct.Struct("<4sHH")
_BODY_LEN = struct.Struct("<I")
_RECORD = struct.Struct("<BQHH")

KIND_TX, KIND_RX, KIND_DISCARD = 0, 1, 2
_KIND_NAMES = {KIND_TX: "tx", KIND_RX: "rx", KIND_DISCARD: "discard"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}

CSV_COLUMNS = ("direction", "capture_index", "seq_num", "payload_len", "payload_hex")


@dataclass(frozen=True)
class LogRecord:
    kind: int
    capture_index: int
    seq_num: int
    data: bytes

    @property
    def direction(self) -> str:
        return _KIND_NAMES[self.kind]


def encode_records(records: Iterable[LogRecord]) -> bytes:
    parts = [_FILE_HEADER.pack(MAGIC, VERSION, 0)]
    for rec in records:
        if rec.kind not in _KIND_NAMES:
            raise ValueError(f"unknown record kind {rec.kind}")
        body = _RECORD.pack(rec.kind, rec.capture_index, rec.seq_num, len(rec.data)) + rec.data
        parts.append(_BODY_LEN.pack(len(body)))
        parts.append(body)
    return b"".join(parts)


def decode_records(blob: bytes) -> list[LogRecord]:
    if len(blob) < _FILE_HEADER.size:
        raise FormatError("truncated packet log header", offset=len(blob))
    magic, version, _ = _FILE_HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported packet log version {version}", offset=4)
    pos = _FILE_HEADER.size
    records = []
    while pos < len(blob):
        start = pos
        if pos + _BODY_LEN.size > len(blob):
            raise FormatError("truncated record length", offset=start)
        (body_len,) = _BODY_LEN.unpack_from(blob, pos)
        pos += _BODY_LEN.size
        if body_len < _RECORD.size:
            raise FormatError(f"record length {body_len} too short", offset=start)
        if pos + body_len > len(blob):
            raise FormatError("truncated record", offset=start)
        kind, capture, seq, data_len = _RECORD.unpack_from(blob, pos)
        if kind not in _KIND_NAMES:
            raise FormatError(f"unknown record kind {kind}", offset=start)
        if _RECORD.size + data_len != body_len:
            raise FormatError("record length disagrees with data length", offset=start)
        data_start = pos + _RECORD.size
        records.append(LogRecord(kind, capture, seq, blob[data_start:data_start + data_len]))
        pos += body_len
    return records


def write_packet_log(path: str | Path, records: Iterable[LogRecord]) -> None:
    Path(path).write_bytes(encode_records(records))


def read_packet_log(path: str | Path) -> list[LogRecord]:
    return decode_records(Path(path).read_bytes())


def write_packet_csv(path: str | Path, records: Iterable[LogRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow([rec.direction, rec.capture_index, rec.seq_num, len(rec.data), rec.data.hex()])


def read_packet_csv(path: str | Path) -> list[LogRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        data = bytes.fromhex(row["payload_hex"])
        if int(row["payload_len"]) != len(data):
            raise FormatError(f"payload_len mismatch for capture {row['capture_index']}")
        out.append(LogRecord(_KIND_CODES[row["direction"]], int(row["capture_index"]),
                             int(row["seq_num"]), data))
    return out
