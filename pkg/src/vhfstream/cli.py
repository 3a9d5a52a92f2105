"""Command-line entry point: ``vhfstream {simulate,sweep,analyze,gen-pattern,info}``.

Exit codes: 0 success, 1 runtime or file-format failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, packetlog
from .channel import Awgn, ChannelModel, Ideal, dump_channel, load_channel
from .errors import ConfigError, VhfStreamError
from .metrics import read_reports_csv, write_reports_csv
from .modem import read_iq
from .session import (
    SWEEP_AXES, SessionConfig, analyze_packets, load_config, read_logs, run_session, run_sweep, write_sweep_csv,
)
from .video import PATTERNS, generate_test_pattern, read_frames, write_frames, write_psnr_csv

log = logging.getLogger("vhfstream")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="session YAML file")
    p.add_argument("--seed", type=int, help="seed for every random source")
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--channel", type=Path, help="channel description YAML")
    p.add_argument("--ebn0-db", type=float, help="replace any AWGN/ideal stage with AWGN at this Eb/N0")
    p.add_argument("--flip-rate", type=float, help="bypass the modem; flip payload bits at this rate")
    p.add_argument("--frames", type=int, help="number of test-pattern frames")
    p.add_argument("--payload-size", type=int)
    p.add_argument("--sps", type=int, help="samples per symbol")
    p.add_argument("--rolloff", type=float, help="RRC roll-off")
    p.add_argument("--sync", choices=("live", "genie"))
    p.add_argument("--session-id")


def build_config(args) -> SessionConfig:
    cfg = load_config(args.config) if args.config else SessionConfig()
    if args.channel:
        cfg = replace(cfg, channel=load_channel(args.channel))
    if args.ebn0_db is not None:
        kept = tuple(s for s in cfg.channel.stages if not isinstance(s, (Awgn, Ideal)))
        cfg = replace(cfg, channel=ChannelModel(kept + (Awgn(ebn0_db=args.ebn0_db),), cfg.channel.rng_seed))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    modem = {}
    if args.sps is not None:
        modem["samples_per_symbol"] = args.sps
    if args.rolloff is not None:
        modem["rrc_rolloff"] = args.rolloff
    if modem:
        cfg = replace(cfg, modem=replace(cfg.modem, **modem))
    if args.frames is not None:
        cfg = replace(cfg, video=replace(cfg.video, frames=args.frames))
    simple = {"flip_rate": args.flip_rate, "payload_size": args.payload_size, "sync": args.sync,
              "session_id": args.session_id}
    return replace(cfg, **{k: v for k, v in simple.items() if v is not None})


def _print_report(report) -> None:
    row = report.to_row()
    print(" ".join(f"{k}={row[k]}" for k in ("session_id", "ber", "bit_errors", "bits_compared",
                                             "packets_dropped", "apsnr_db", "frames_absent",
                                             "acceptable_flag")))


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    result = run_session(cfg, args.out_dir)
    _print_report(result.report)
    if result.modem_ber is not None:
        print(f"modem_ber={result.modem_ber!r}")
    return 0


def _parse_values(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_sweep(args, parser) -> int:
    try:
        values = _parse_values(args.values)
    except ValueError as exc:
        parser.error(f"--values: {exc}")
    if not values:
        parser.error("--values must list at least one value")
    cfg = build_config(args)
    rows = run_sweep(cfg, args.axis, values, jobs=args.jobs)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "sweep.csv"
    write_sweep_csv(out, rows)
    for r in rows:
        print(f"{args.axis}={r['value']} status={r['status']} ber={r.get('ber', '')} "
              f"apsnr_db={r.get('apsnr_db', '')}")
    print(f"wrote {out}")
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def cmd_analyze(args) -> int:
    tx, rx, discards = read_logs(args.tx_log, args.rx_log)
    reference = read_frames(args.ref_frames) if args.ref_frames else None
    received = read_frames(args.rx_frames) if args.rx_frames else None
    report, _ = analyze_packets(tx, rx, discards, reference, args.payload_size,
                                session_id=args.session_id, received=received,
                                screen=not args.no_screen)
    _print_report(report)
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        write_reports_csv(args.out_dir / "report.csv", [report])
        if reference is not None:
            write_psnr_csv(args.out_dir / "psnr.csv", report.psnr_series)
    return 0


def cmd_gen_pattern(args) -> int:
    stream = generate_test_pattern(args.pattern, args.width, args.height, args.frames,
                                   channels=args.channels, seed=args.seed or 0, frame_rate=args.fps)
    write_frames(args.out, stream)
    print(f"wrote {len(stream)} frames of {args.width}x{args.height}x{args.channels} to {args.out}")
    return 0


def _describe(path: Path) -> dict:
    head = path.read_bytes()[:4]
    if head == b"NLIQ":
        iq = read_iq(path)
        return {"kind": "iq", "sample_rate": iq.sample_rate, "samples": int(iq.samples.size),
                "duration_s": iq.samples.size / iq.sample_rate}
    if head == packetlog.MAGIC:
        recs = packetlog.read_packet_log(path)
        kinds = {}
        for r in recs:
            kinds[r.direction] = kinds.get(r.direction, 0) + 1
        return {"kind": "packet-log", "records": len(recs), **kinds}
    if path.suffix == ".frames":
        s = read_frames(path)
        f = s.frames[0]
        return {"kind": "frames", "frames": len(s), "width": f.width, "height": f.height,
                "channels": f.channels, "frame_rate": s.frame_rate, "absent": sorted(s.absent)}
    if path.suffix == ".csv":
        return {"kind": "report", "rows": [r.to_row() for r in read_reports_csv(path)]}
    if path.suffix in (".yaml", ".yml"):
        return {"kind": "channel", "description": dump_channel(load_channel(path))}
    raise ConfigError(f"unrecognised file type: {path}")


def cmd_info(args) -> int:
    if not args.paths:
        cfg = SessionConfig()
        print(json.dumps({"version": __version__, "defaults": cfg.to_dict()}, indent=1, default=str))
        return 0
    for p in args.paths:
        print(json.dumps({"path": str(p), **_describe(p)}, indent=1, default=str))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vhfstream", description="BPSK video link simulator")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one session and write its artifacts")
    _common(p)

    p = sub.add_parser("sweep", help="run one session per Eb/N0 or flip-rate value")
    _common(p)
    p.add_argument("--axis", choices=SWEEP_AXES, default="ebn0_db")
    p.add_argument("--values", required=True, help="comma or space separated values")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("analyze", help="rebuild a report from saved packet logs")
    p.add_argument("--tx-log", type=Path, required=True)
    p.add_argument("--rx-log", type=Path, required=True)
    p.add_argument("--ref-frames", type=Path)
    p.add_argument("--rx-frames", type=Path)
    p.add_argument("--payload-size", type=int)
    p.add_argument("--session-id", default="analysis")
    p.add_argument("--no-screen", action="store_true",
                   help="plain first-copy-wins matching, without payload screening")
    p.add_argument("--out-dir", type=Path)

    p = sub.add_parser("gen-pattern", help="write a synthetic test pattern")
    p.add_argument("--pattern", choices=PATTERNS, default="moving-box")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--frames", type=int, default=15)
    p.add_argument("--fps", type=float, default=15.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("info", help="describe artifact files, or print defaults")
    p.add_argument("paths", nargs="*", type=Path)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "sweep":
            return cmd_sweep(args, parser)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "gen-pattern":
            return cmd_gen_pattern(args)
        return cmd_info(args)
    except (VhfStreamError, ValueError, OSError) as exc:
        print(f"vhfstream {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
