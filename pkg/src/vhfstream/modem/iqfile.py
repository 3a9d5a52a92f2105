"""I/Q sample files.

32-byte header, little-endian: magic ``b"NLIQ"`` | version u32 |
sample_rate f64 | 16 reserved zero bytes. Samples follow as interleaved
float32 pairs (I, Q).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .config import IqBuffer

MAGIC = b"NLIQ"
VERSION = 1
_HEADER = struct.Struct("<4sId16x")
assert _HEADER.size == 32


def _header(sample_rate: float) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, float(sample_rate))


def _interleave(samples: np.ndarray) -> bytes:
    out = np.empty(2 * samples.size, dtype="<f4")
    out[0::2] = samples.real
    out[1::2] = samples.imag
    return out.tobytes()


def write_iq(path: str | Path, iq: IqBuffer) -> None:
    with open(path, "wb") as fh:
        fh.write(_header(iq.sample_rate))
        fh.write(_interleave(iq.samples))


def read_iq(path: str | Path) -> IqBuffer:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError("truncated I/Q header", offset=len(blob))
    magic, version, rate = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported I/Q version {version}", offset=4)
    body = len(blob) - _HEADER.size
    if body % 8:
        raise FormatError("sample data is not a whole number of I/Q pairs",
                          offset=_HEADER.size + body - body % 8)
    raw = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return IqBuffer(raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64), rate)


class IqWriter:
    """Append blocks of samples to an I/Q file as they are produced."""

    def __init__(self, path: str | Path, sample_rate: float):
        self._fh = open(path, "wb")
        self._fh.write(_header(sample_rate))
        self.n_samples = 0

    def write(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=np.complex128)
        self._fh.write(_interleave(samples))
        self.n_samples += samples.size

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
