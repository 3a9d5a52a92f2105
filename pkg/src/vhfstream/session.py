"""End-to-end experiment sessions: source -> framing -> modem -> channel -> receiver -> report.

Session files are YAML; every key is optional::

    session_id: courtyard-a
    seed: 1                  # flip-injection and opaque-source seed
    source: video            # or "opaque" (random bytes, BER only)
    opaque_bytes: 100000
    payload_size: 1024
    video: {pattern: moving-box, width: 320, height: 240, channels: 1,
            frames: 15, fps: 15, seed: 0}
    video_bit_rate: 300000   # pacing accounting only
    modem: {samples_per_symbol: 4, rrc_rolloff: 0.35}
    channel: channel.yaml    # path (relative to this file) or an inline mapping
    flip_rate: null          # set to bypass the modem and flip payload bits directly
    screen_matches: true     # use tx payloads to undo sequence-number aliasing
    sync: live               # or "genie"
    save_iq: true
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import framing, packetlog
from .channel import Awgn, ChannelModel, ChannelStream, Cfo, Ideal, channel_from_dict, channel_to_dict, load_channel
from .errors import ConfigError, UndefinedMetricError
from .framing import Discard, Packet, PacketHeader
from .metrics import (
    BerResult, LinkReport, aligned_bit_errors, build_report, compute_ber, match_packets, write_reports_csv,
)
from .modem import GenieRxStream, IqWriter, ModemConfig, RxStream, TxStream, idle_bits
from .video import (
    DEFAULT_FPS, DEFAULT_HEIGHT, DEFAULT_WIDTH, PREFIX_LEN, FrameStream, Geometry, generate_test_pattern, packetize,
    psnr_series, reconstruct, write_frames, write_psnr_csv,
)

log = logging.getLogger(__name__)

BIT_BLOCK = 1 << 16
VIDEO_BIT_RATES = (300e3, 500e3)


@dataclass(frozen=True)
class VideoSource:
    pattern: str = "moving-box"
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    channels: int = 1
    frames: int = 15
    fps: float = DEFAULT_FPS
    seed: int = 0

    def generate(self) -> FrameStream:
        return generate_test_pattern(self.pattern, self.width, self.height, self.frames,
                                     channels=self.channels, seed=self.seed, frame_rate=self.fps)


@dataclass(frozen=True)
class SessionConfig:
    session_id: str = "session"
    modem: ModemConfig = field(default_factory=ModemConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    video: VideoSource = field(default_factory=VideoSource)
    source: str = "video"
    opaque_bytes: int = 100_000
    payload_size: int = 1024
    video_bit_rate: float = VIDEO_BIT_RATES[0]
    flip_rate: float | None = None
    seed: int = 0
    sync: str = "live"
    save_iq: bool = True
    threshold: int = framing.DEFAULT_THRESHOLD
    max_payload: int = framing.MAX_PAYLOAD
    screen_matches: bool = True

    def __post_init__(self):
        if self.source not in ("video", "opaque"):
            raise ConfigError("source must be 'video' or 'opaque'")
        if self.sync not in ("live", "genie"):
            raise ConfigError("sync must be 'live' or 'genie'")
        if not PREFIX_LEN < self.payload_size <= self.max_payload:
            raise ConfigError(f"payload_size must be in ({PREFIX_LEN}, {self.max_payload}]")
        if self.flip_rate is not None and not 0.0 <= self.flip_rate <= 1.0:
            raise ConfigError("flip_rate must lie in [0, 1]")

    def with_seed(self, seed: int) -> "SessionConfig":
        """Reseed every random source: flips, opaque payloads and the channel."""
        return replace(self, seed=int(seed), channel=ChannelModel(self.channel.stages, int(seed)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modem"] = self.modem.to_dict()
        d["video"] = asdict(self.video)
        d["channel"] = channel_to_dict(self.channel)
        return d


def config_from_dict(d: dict, base_dir: Path | None = None) -> SessionConfig:
    d = dict(d or {})
    kwargs = {}
    try:
        if "modem" in d:
            kwargs["modem"] = ModemConfig(**(d.pop("modem") or {}))
        if "video" in d:
            kwargs["video"] = VideoSource(**(d.pop("video") or {}))
        if "channel" in d:
            ch = d.pop("channel")
            if isinstance(ch, str):
                path = Path(ch)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                kwargs["channel"] = load_channel(path)
            else:
                kwargs["channel"] = channel_from_dict(ch)
        known = {f for f in SessionConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown session keys: {sorted(unknown)}")
        kwargs.update(d)
        return SessionConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> SessionConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data or {}, path.parent)


@dataclass
class SessionResult:
    config: SessionConfig
    report: LinkReport
    tx_packets: list
    rx_packets: list
    discards: list
    reference: FrameStream | None = None
    received: FrameStream | None = None
    diagnostics: dict = field(default_factory=dict)
    modem_errors: tuple[int, int, int] | None = None

    @property
    def modem_ber(self) -> float | None:
        if not self.modem_errors or self.modem_errors[1] == 0:
            return None
        return self.modem_errors[0] / self.modem_errors[1]


def _payloads(cfg: SessionConfig) -> tuple[list[bytes], FrameStream | None]:
    if cfg.source == "video":
        ref = cfg.video.generate()
        return packetize(ref, cfg.payload_size), ref
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    blob = rng.integers(0, 256, cfg.opaque_bytes, dtype=np.uint8).tobytes()
    step = cfg.payload_size
    return [blob[i:i + step] for i in range(0, len(blob), step)], None


def inject_flips(packets: Sequence[Packet], rate: float, seed: int) -> tuple[list[Packet], int]:
    """Flip each payload bit independently with probability ``rate``.

    Headers are untouched. Returns the corrupted packets and the number of
    flipped bits.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    out, total = [], 0
    for p in packets:
        if not p.payload or rate == 0:
            out.append(Packet(p.header, p.payload, p.bit_offset))
            continue
        bits = np.unpackbits(np.frombuffer(p.payload, dtype=np.uint8))
        mask = rng.random(bits.size) < rate
        total += int(mask.sum())
        out.append(Packet(p.header, np.packbits(bits ^ mask).tobytes(), p.bit_offset))
    return out, total


def _genie_params(channel: ChannelModel) -> tuple[float, float]:
    cfo = sum(s.offset_hz for s in channel.stages if isinstance(s, Cfo))
    phase = sum(s.initial_phase_rad for s in channel.stages if isinstance(s, Cfo))
    return cfo, phase


def _run_modem(cfg: SessionConfig, tx_bits: np.ndarray, out_dir: Path | None):
    m = cfg.modem
    tx = TxStream(m)
    chan = ChannelStream(cfg.channel, m.sample_rate, sps=m.samples_per_symbol,
                         signal_power=1.0 / m.samples_per_symbol)
    if cfg.sync == "genie":
        cfo, phase = _genie_params(cfg.channel)
        rx = GenieRxStream(m, cfo_hz=cfo, phase=phase)
    else:
        rx = RxStream(m)
    writers = []
    if out_dir is not None and cfg.save_iq:
        writers = [IqWriter(out_dir / "tx.iq", m.sample_rate), IqWriter(out_dir / "rx.iq", m.sample_rate)]
    parts = []

    def push(samples, through_channel=True):
        if writers:
            writers[0].write(samples)
        y = chan.process(samples) if through_channel else samples
        if writers:
            writers[1].write(y)
        parts.append(rx.process(y))

    try:
        for i in range(0, tx_bits.size, BIT_BLOCK):
            push(tx.process(tx_bits[i:i + BIT_BLOCK]))
        push(tx.flush())
        tail = chan.flush()
        if writers:
            writers[1].write(tail)
        parts.append(rx.process(tail))
        parts.append(rx.flush())
    finally:
        for w in writers:
            w.close()
    return np.concatenate(parts), rx.diagnostics()


def run_session(cfg: SessionConfig, out_dir: str | Path | None = None) -> SessionResult:
    """Run one session end to end and, with ``out_dir``, write every artifact."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    payloads, reference = _payloads(cfg)
    tx_packets = [
        Packet(PacketHeader(framing.BPSK_BITS_PER_SYMBOL, len(p), i % framing.SEQ_MODULUS), p, i)
        for i, p in enumerate(payloads)
    ]
    diagnostics: dict = {}
    modem_errors = None
    discards: list[Discard] = []
    if cfg.flip_rate is not None:
        rx_packets, flipped = inject_flips(tx_packets, cfg.flip_rate, cfg.seed)
        diagnostics["injected_flips"] = flipped
    else:
        wire = b"".join(
            framing.build_packet(p.payload, p.seq_num, max_payload=cfg.max_payload) for p in tx_packets
        )
        tx_bits = np.unpackbits(np.frombuffer(wire, dtype=np.uint8))
        rx_bits, diag = _run_modem(cfg, tx_bits, out)
        diagnostics.update(asdict(diag))
        rx_packets, discards = framing.extract_packets(rx_bits, cfg.threshold, max_payload=cfg.max_payload)
        sent = np.concatenate([idle_bits(cfg.modem.ramp_symbols), tx_bits])
        modem_errors = aligned_bit_errors(sent, rx_bits)

    report, received = analyze_packets(tx_packets, rx_packets, discards, reference,
                                       cfg.payload_size, session_id=cfg.session_id,
                                       screen=cfg.screen_matches)
    result = SessionResult(cfg, report, tx_packets, rx_packets, discards, reference, received,
                           diagnostics, modem_errors)
    if out is not None:
        write_artifacts(result, out)
    return result


def analyze_packets(tx_packets, rx_packets, discards, reference: FrameStream | None,
                    payload_size: int | None = None, *, session_id: str = "session",
                    received: FrameStream | None = None,
                    screen: bool = True) -> tuple[LinkReport, FrameStream | None]:
    """Match, count bit errors, rebuild frames and assemble the report."""
    match = match_packets(tx_packets, rx_packets, screen=screen)
    try:
        ber = compute_ber(match)
    except UndefinedMetricError:
        ber = None
    series = None
    if reference is not None:
        if received is None:
            if payload_size is None:
                payload_size = max((len(p.payload) for p in tx_packets), default=0)
            slots: list[bytes | None] = [None] * len(tx_packets)
            for i, j in match.pairs:
                slots[i] = rx_packets[j].payload
            received = reconstruct(slots, Geometry.of(reference, payload_size), reference.frame_rate)
        series = psnr_series(reference, received)
    return build_report(match, ber, series, session_id=session_id, discards=discards), received


def _log_records(result: SessionResult):
    tx = [packetlog.LogRecord(packetlog.KIND_TX, i, p.seq_num, p.payload) for i, p in enumerate(result.tx_packets)]
    rx = [packetlog.LogRecord(packetlog.KIND_RX, p.bit_offset or 0, p.seq_num, p.payload) for p in result.rx_packets]
    rx += [packetlog.LogRecord(packetlog.KIND_DISCARD, d.bit_offset, 0, d.reason.encode()) for d in result.discards]
    rx.sort(key=lambda r: (r.capture_index, r.kind))
    return tx, rx


def write_artifacts(result: SessionResult, out: Path) -> None:
    tx, rx = _log_records(result)
    packetlog.write_packet_log(out / "tx.pktlog", tx)
    packetlog.write_packet_log(out / "rx.pktlog", rx)
    packetlog.write_packet_csv(out / "packets.csv", tx + rx)
    if result.reference is not None:
        write_frames(out / "ref.frames", result.reference)
        write_frames(out / "rx.frames", result.received)
        write_psnr_csv(out / "psnr.csv", result.report.psnr_series)
    write_reports_csv(out / "report.csv", [result.report])
    cfg = result.config
    link_rate = cfg.modem.symbol_rate * framing.BPSK_BITS_PER_SYMBOL
    airtime = sum(8 * framing.packet_length(len(p.payload)) for p in result.tx_packets) / link_rate
    summary = {
        "config": cfg.to_dict(),
        "diagnostics": result.diagnostics,
        "modem_bit_errors": None if result.modem_errors is None else list(result.modem_errors),
        "pacing": {
            "link_bit_rate": link_rate,
            "video_bit_rate": cfg.video_bit_rate,
            "offered_load": cfg.video_bit_rate / link_rate,
            "airtime_s": airtime,
            "video_duration_s": (cfg.video.frames / cfg.video.fps) if cfg.source == "video" else None,
        },
    }
    (out / "session.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=str) + "\n")


def read_logs(tx_path, rx_path) -> tuple[list[Packet], list[Packet], list[Discard]]:
    def packet(r):
        return Packet(PacketHeader(framing.BPSK_BITS_PER_SYMBOL, len(r.data), r.seq_num), r.data, r.capture_index)

    tx_records = packetlog.read_packet_log(tx_path)
    rx_records = packetlog.read_packet_log(rx_path)
    tx = [packet(r) for r in tx_records if r.kind == packetlog.KIND_TX]
    rx = [packet(r) for r in rx_records if r.kind == packetlog.KIND_RX]
    discards = [Discard(r.capture_index, r.data.decode(errors="replace")) for r in rx_records
                if r.kind == packetlog.KIND_DISCARD]
    return tx, rx, discards


# -- sweeps --------------------------------------------------------------

SWEEP_AXES = ("ebn0_db", "flip_rate")
SWEEP_COLUMNS = ("axis", "value", "status", "ber", "apsnr_db", "bit_errors", "bits_compared",
                 "packets_dropped", "frames_absent", "acceptable_flag", "modem_ber")


def point_config(base: SessionConfig, axis: str, value: float) -> SessionConfig:
    if axis == "flip_rate":
        return replace(base, flip_rate=float(value), session_id=f"{base.session_id}:flip_rate={value!r}")
    if axis == "ebn0_db":
        stages = tuple(s for s in base.channel.stages if not isinstance(s, (Awgn, Ideal)))
        channel = ChannelModel(stages + (Awgn(ebn0_db=float(value)),), base.channel.rng_seed)
        return replace(base, channel=channel, flip_rate=None, save_iq=False,
                       session_id=f"{base.session_id}:ebn0_db={value!r}")
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def _sweep_point(args):
    base, axis, value = args
    row = {"axis": axis, "value": repr(float(value))}
    try:
        res = run_session(point_config(base, axis, value))
    except Exception as exc:  # one bad point must not abort the sweep
        log.warning("sweep point %s=%s failed: %s", axis, value, exc)
        row["status"] = f"failed: {exc}"
        return row
    rep = res.report.to_row()
    row.update({k: rep[k] for k in ("ber", "apsnr_db", "bit_errors", "bits_compared",
                                    "packets_dropped", "frames_absent", "acceptable_flag")})
    row["status"] = "ok"
    row["modem_ber"] = "" if res.modem_ber is None else repr(res.modem_ber)
    return row


def run_sweep(base: SessionConfig, axis: str, values: Sequence[float], *, jobs: int = 1) -> list[dict]:
    """One session per value; failed points become rows with a ``failed`` status."""
    if not len(values):
        raise ConfigError("a sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    tasks = [(base, axis, v) for v in values]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def write_sweep_csv(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n", restval="")
        w.writeheader()
        w.writerows(rows)


def theoretical_apsnr(flip_rate: float) -> float:
    """PSNR of 8-bit pixels under independent bit flips at ``flip_rate`` (first order)."""
    if flip_rate <= 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / (flip_rate * 21845.0))


def packet_sample_span(cfg: SessionConfig, first: int, last: int) -> tuple[int, int]:
    """Transmit sample interval ``[start, end)`` occupied by packets ``first..last`` inclusive.

    Useful for placing a burst drop over chosen packets (a dead zone).
    """
    payloads, _ = _payloads(cfg)
    sizes = np.array([8 * framing.packet_length(len(p)) for p in payloads])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    sps = cfg.modem.samples_per_symbol
    offset = cfg.modem.ramp_symbols
    return int((offset + starts[first]) * sps), int((offset + starts[last + 1]) * sps)
