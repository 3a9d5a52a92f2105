"""Raw video frames: test sources, packetization, lossy reconstruction, PSNR.

Frames are 8-bit, stored planar as ``(channels, height, width)`` arrays.
Each payload starts with a 6-byte big-endian prefix ``frame_index u32 |
chunk_index u16`` followed by a slice of the frame's planar bytes.

Frame files are the planar frames concatenated, with a JSON sidecar
(``<name>.json``) holding ``width, height, channels, fps, n_frames,
first_index`` and the list of ``absent`` frame indices.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, GeometryMismatchError, UndefinedMetricError

DEFAULT_WIDTH = 320
DEFAULT_HEIGHT = 240
DEFAULT_FPS = 15.0
MAX_VALUE = 255
PSNR_CAP_DB = 100.0
ACCEPTABLE_PSNR_DB = 30.0
CONCEAL_FILL = 128

PREFIX = struct.Struct(">IH")
PREFIX_LEN = PREFIX.size  # 6


@dataclass(frozen=True)
class VideoFrame:
    pixels: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[np.newaxis]
        if px.ndim != 3 or px.shape[0] not in (1, 3):
            raise ValueError(f"pixels must be (channels, h, w) with 1 or 3 channels, got {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError("pixels must be uint8")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def bit_depth(self) -> int:
        return 8

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, VideoFrame):
            return NotImplemented
        return self.frame_index == other.frame_index and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass
class FrameStream:
    frames: list
    frame_rate: float = DEFAULT_FPS
    absent: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        idx = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("frame indices must be strictly increasing")
        self.absent = frozenset(self.absent)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def present(self) -> list:
        return [f for f in self.frames if f.frame_index not in self.absent]


@dataclass(frozen=True)
class Geometry:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    channels: int = 1
    n_frames: int = 1
    payload_size: int = 1024
    first_index: int = 0

    @property
    def frame_bytes(self) -> int:
        return self.width * self.height * self.channels

    @property
    def chunk_bytes(self) -> int:
        return self.payload_size - PREFIX_LEN

    @property
    def chunks_per_frame(self) -> int:
        return math.ceil(self.frame_bytes / self.chunk_bytes)

    @property
    def n_payloads(self) -> int:
        return self.n_frames * self.chunks_per_frame

    @classmethod
    def of(cls, stream: FrameStream, payload_size: int) -> "Geometry":
        f = stream.frames[0]
        return cls(f.width, f.height, f.channels, len(stream), payload_size, f.frame_index)


# -- sources -------------------------------------------------------------

PATTERNS = ("gradient", "checker", "moving-box", "noise")


def generate_test_pattern(kind: str, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                          n_frames: int = 1, *, channels: int = 1, seed: int = 0,
                          frame_rate: float = DEFAULT_FPS) -> FrameStream:
    """Deterministic synthetic source standing in for a camera.

    ``gradient`` is a linear ramp 0..255 over the row-major pixel index,
    ``checker`` 8x8-pixel black/white cells, ``moving-box`` a bright box on
    a dark ramp shifted right by one pixel per frame, ``noise`` i.i.d.
    uniform bytes from ``seed``.
    """
    if width <= 0 or height <= 0 or n_frames < 0:
        raise ValueError("width and height must be positive")
    if channels not in (1, 3):
        raise ValueError("channels must be 1 or 3")
    n = width * height
    rng = np.random.default_rng(seed)
    frames = []
    for k in range(n_frames):
        if kind == "gradient":
            ramp = np.rint(np.arange(n) * (MAX_VALUE / max(n - 1, 1))).astype(np.uint8)
            plane = ramp.reshape(height, width)
        elif kind == "checker":
            yy, xx = np.mgrid[0:height, 0:width]
            plane = np.where(((yy // 8) + (xx // 8)) % 2 == 0, 0, 255).astype(np.uint8)
        elif kind == "moving-box":
            xx = np.arange(width)
            plane = np.tile((16 + 48 * xx // max(width, 1)).astype(np.uint8), (height, 1))
            bw, bh = max(1, width // 4), max(1, height // 4)
            cols = (k + np.arange(bw)) % width
            top = height // 3
            plane[top:top + bh, cols] = 224
        elif kind == "noise":
            frames.append(VideoFrame(rng.integers(0, 256, (channels, height, width), dtype=np.uint8), k))
            continue
        else:
            raise ValueError(f"unknown pattern {kind!r}; choose from {PATTERNS}")
        frames.append(VideoFrame(np.repeat(plane[np.newaxis], channels, axis=0), k))
    return FrameStream(frames, frame_rate)


# -- packetization -------------------------------------------------------

def packetize(stream: FrameStream, payload_size: int = 1024) -> list[bytes]:
    """Split each frame's planar bytes into prefixed chunks, in stream order."""
    if payload_size <= PREFIX_LEN:
        raise ValueError(f"payload_size must exceed the {PREFIX_LEN}-byte prefix")
    step = payload_size - PREFIX_LEN
    out = []
    for frame in stream:
        data = frame.tobytes()
        for ci, off in enumerate(range(0, len(data), step)):
            out.append(PREFIX.pack(frame.frame_index, ci) + data[off:off + step])
    return out


def read_prefix(payload: bytes) -> tuple[int, int]:
    if len(payload) < PREFIX_LEN:
        raise ValueError("payload shorter than its prefix")
    return PREFIX.unpack_from(payload)


def depacketize(payloads: Sequence[bytes], geometry: Geometry, frame_rate: float = DEFAULT_FPS) -> FrameStream:
    """Lossless inverse of :func:`packetize`, placing chunks by their prefix."""
    g = geometry
    buf = np.zeros((g.n_frames, g.frame_bytes), dtype=np.uint8)
    for p in payloads:
        fi, ci = read_prefix(p)
        off = ci * g.chunk_bytes
        body = np.frombuffer(p, dtype=np.uint8, offset=PREFIX_LEN)
        buf[fi - g.first_index, off:off + body.size] = body
    shape = (g.channels, g.height, g.width)
    return FrameStream([VideoFrame(buf[i].reshape(shape), g.first_index + i) for i in range(g.n_frames)],
                       frame_rate)


def reconstruct(payloads: Sequence[bytes | None], geometry: Geometry,
                frame_rate: float = DEFAULT_FPS) -> FrameStream:
    """Rebuild frames from payloads that may be missing or corrupted.

    ``payloads[i]`` is the received payload for the i-th transmitted chunk
    (position established by sequence-number matching) or ``None``. The
    position, not the possibly corrupted prefix, decides placement. A
    payload of the wrong length counts as missing. Missing bytes are copied
    from the previous reconstructed frame (mid-gray for the first frame);
    frames with no received chunk are listed in ``absent``.
    """
    g = geometry
    if len(payloads) != g.n_payloads:
        raise ValueError(f"expected {g.n_payloads} payload slots, got {len(payloads)}")
    cpf, step = g.chunks_per_frame, g.chunk_bytes
    shape = (g.channels, g.height, g.width)
    prev = np.full(g.frame_bytes, CONCEAL_FILL, dtype=np.uint8)
    frames, absent = [], []
    for fi in range(g.n_frames):
        cur = prev.copy()
        got = 0
        for ci in range(cpf):
            p = payloads[fi * cpf + ci]
            off = ci * step
            want = min(step, g.frame_bytes - off)
            if p is None or len(p) != PREFIX_LEN + want:
                continue
            cur[off:off + want] = np.frombuffer(p, dtype=np.uint8, offset=PREFIX_LEN)
            got += 1
        index = g.first_index + fi
        if got == 0:
            absent.append(index)
        frames.append(VideoFrame(cur.reshape(shape), index))
        prev = cur
    return FrameStream(frames, frame_rate, frozenset(absent))


# -- quality -------------------------------------------------------------

def squared_error(reference: VideoFrame, test: VideoFrame) -> int:
    if reference.pixels.shape != test.pixels.shape:
        raise GeometryMismatchError(
            f"frame shapes differ: {reference.pixels.shape} vs {test.pixels.shape}"
        )
    d = reference.pixels.astype(np.int64) - test.pixels.astype(np.int64)
    return int(np.sum(d * d))


def psnr(reference: VideoFrame, test: VideoFrame, *, cap: float = PSNR_CAP_DB) -> float:
    """Frame PSNR in dB over all pixels and channels, limited to ``cap``.

    Identical frames return ``cap``.
    """
    sse = squared_error(reference, test)
    if sse == 0:
        return cap
    n = reference.pixels.size
    return min(cap, 10.0 * math.log10(MAX_VALUE**2 * n / sse))


def psnr_series(reference: FrameStream, test: FrameStream) -> list[tuple[int, float | None]]:
    """Per-frame PSNR keyed by frame index; ``None`` where the test frame is absent or missing."""
    by_index = {f.frame_index: f for f in test.frames}
    out = []
    for ref in reference:
        t = by_index.get(ref.frame_index)
        if t is None or ref.frame_index in test.absent:
            out.append((ref.frame_index, None))
        else:
            out.append((ref.frame_index, psnr(ref, t)))
    return out


def mean_psnr(series) -> float:
    values = [v for _, v in series if v is not None]
    if not values:
        raise UndefinedMetricError("no frames present in both streams")
    return float(math.fsum(values) / len(values))


def apsnr(reference: FrameStream, test: FrameStream) -> float:
    """Average PSNR over the frames present in both streams."""
    return mean_psnr(psnr_series(reference, test))


# -- files ---------------------------------------------------------------

def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_frames(path: str | Path, stream: FrameStream) -> None:
    path = Path(path)
    f0 = stream.frames[0]
    meta = {
        "width": f0.width,
        "height": f0.height,
        "channels": f0.channels,
        "fps": stream.frame_rate,
        "n_frames": len(stream),
        "first_index": f0.frame_index,
        "absent": sorted(stream.absent),
    }
    with open(path, "wb") as fh:
        for f in stream:
            fh.write(f.tobytes())
    _sidecar(path).write_text(json.dumps(meta, indent=1) + "\n")


def read_frames(path: str | Path) -> FrameStream:
    path = Path(path)
    try:
        meta = json.loads(_sidecar(path).read_text())
        w, h, c, n = (int(meta[k]) for k in ("width", "height", "channels", "n_frames"))
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"bad frame sidecar for {path}: {exc}") from exc
    blob = path.read_bytes()
    size = w * h * c
    if len(blob) != size * n:
        raise FormatError(f"expected {size * n} bytes of frames, found {len(blob)}",
                          offset=min(len(blob), size * n))
    first = int(meta.get("first_index", 0))
    arr = np.frombuffer(blob, dtype=np.uint8).reshape(n, c, h, w)
    frames = [VideoFrame(arr[i], first + i) for i in range(n)]
    return FrameStream(frames, float(meta.get("fps", DEFAULT_FPS)), frozenset(meta.get("absent", [])))


def write_psnr_csv(path: str | Path, series) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "psnr_db", "present_flag"])
        for idx, value in series:
            w.writerow([idx, "" if value is None else repr(float(value)), 0 if value is None else 1])


def read_psnr_csv(path: str | Path) -> list[tuple[int, float | None]]:
    with open(path, newline="") as fh:
        return [
            (int(r["frame_index"]), float(r["psnr_db"]) if r["present_flag"] == "1" else None)
            for r in csv.DictReader(fh)
        ]
