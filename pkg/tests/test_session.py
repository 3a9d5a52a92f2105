from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from vhfstream.channel import Awgn, BurstDrop, ChannelModel, Cfo
from vhfstream.errors import ConfigError
from vhfstream.metrics import read_reports_csv
from vhfstream.session import (
    SessionConfig, VideoSource, analyze_packets, config_from_dict, inject_flips, load_config,
    packet_sample_span, point_config, read_logs, run_session, run_sweep, theoretical_apsnr,
)
from vhfstream.video import read_frames

SMALL = SessionConfig(video=VideoSource(width=64, height=48, frames=4), payload_size=256)


def test_ideal_session_is_perfect(tmp_path):
    res = run_session(SMALL, tmp_path)
    rep = res.report
    assert rep.bit_errors == 0 and rep.ber == 0.0 and rep.apsnr_db == 100.0
    assert rep.packets_dropped == 0 and rep.packets_rx == rep.packets_tx
    assert res.modem_errors[0] == 0
    for name in ("tx.pktlog", "rx.pktlog", "packets.csv", "ref.frames", "rx.frames", "psnr.csv",
                 "report.csv", "tx.iq", "rx.iq", "session.json"):
        assert (tmp_path / name).exists(), name


def test_offline_analysis_reproduces_report(tmp_path):
    cfg = replace(SMALL, channel=ChannelModel((Cfo(80.0, 1.0), Awgn(ebn0_db=6.0)), 2))
    res = run_session(cfg, tmp_path)
    tx, rx, discards = read_logs(tmp_path / "tx.pktlog", tmp_path / "rx.pktlog")
    report, received = analyze_packets(tx, rx, discards, read_frames(tmp_path / "ref.frames"),
                                       session_id=cfg.session_id)
    assert report.to_row() == read_reports_csv(tmp_path / "report.csv")[0].to_row() == res.report.to_row()
    assert received.frames == read_frames(tmp_path / "rx.frames").frames


def test_flip_injection_count_is_exact():
    res = run_session(replace(SMALL, flip_rate=2e-3, seed=9))
    assert res.report.bit_errors == res.diagnostics["injected_flips"] > 0


def test_inject_flips_leaves_headers():
    packets = run_session(SMALL).tx_packets
    flipped, n = inject_flips(packets, 0.5, 1)
    assert [p.header for p in flipped] == [p.header for p in packets] and n > 0


def test_flip_sweep_is_monotone():
    rows = run_sweep(SMALL, "flip_rate", [0, 1e-6, 1e-4, 1e-3, 1e-2])
    apsnr = [float(r["apsnr_db"]) for r in rows]
    assert all(r["status"] == "ok" for r in rows)
    assert all(b <= a for a, b in zip(apsnr, apsnr[1:]))
    assert apsnr[0] == 100.0


def test_flip_rate_apsnr_prediction():
    cfg = replace(SMALL, video=VideoSource(pattern="noise", width=320, height=240, frames=6), payload_size=1024)
    res = run_session(replace(cfg, flip_rate=1e-3, seed=3))
    assert res.report.apsnr_db == pytest.approx(theoretical_apsnr(1e-3), abs=0.5)


def test_dead_zone_frame():
    cfg = SMALL
    n = run_session(cfg).report.packets_tx
    per_frame = n // cfg.video.frames
    start, end = packet_sample_span(cfg, per_frame, 2 * per_frame - 1)
    res = run_session(replace(cfg, channel=ChannelModel((BurstDrop(((start, end),)),))))
    rep = res.report
    assert rep.frames_absent >= 1
    assert per_frame <= rep.packets_dropped <= per_frame + 2
    assert [v for i, v in rep.psnr_series if i == 1] == [None]


def test_whole_stream_dead_zone():
    res = run_session(replace(SMALL, channel=ChannelModel((BurstDrop(((0, 10**9),)),))))
    rep = res.report
    assert rep.ber is None and rep.apsnr_db is None
    assert rep.frames_absent == SMALL.video.frames and rep.packets_dropped == rep.packets_tx
    assert rep.to_row()["acceptable_flag"] == 0


def test_ebn0_sweep_genie_rows():
    base = replace(SMALL, source="opaque", opaque_bytes=40_000, sync="genie")
    rows = run_sweep(base, "ebn0_db", [8.0])
    assert rows[0]["status"] == "ok" and float(rows[0]["modem_ber"]) < 1e-3


def test_sweep_point_configs():
    cfg = point_config(replace(SMALL, channel=ChannelModel((Cfo(10.0), Awgn(ebn0_db=1.0)), 4)), "ebn0_db", 5.0)
    assert cfg.channel.stages == (Cfo(10.0), Awgn(ebn0_db=5.0)) and cfg.channel.rng_seed == 4
    with pytest.raises(ConfigError):
        run_sweep(SMALL, "ebn0_db", [])
    with pytest.raises(ConfigError):
        run_sweep(SMALL, "power", [1.0])


def test_failed_point_does_not_abort_sweep():
    rows = run_sweep(SMALL, "flip_rate", [1e-3, 7.0])
    assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("failed")


def test_config_file(tmp_path):
    (tmp_path / "ch.yaml").write_text("rng_seed: 5\nstages:\n  - {type: awgn, ebn0_db: 9}\n")
    (tmp_path / "s.yaml").write_text(
        "session_id: yard\npayload_size: 512\nchannel: ch.yaml\n"
        "video: {pattern: checker, width: 32, height: 32, frames: 2}\nmodem: {samples_per_symbol: 8}\n")
    cfg = load_config(tmp_path / "s.yaml")
    assert cfg.session_id == "yard" and cfg.modem.samples_per_symbol == 8
    assert cfg.channel == ChannelModel((Awgn(ebn0_db=9.0),), 5)
    with pytest.raises(ConfigError):
        config_from_dict({"colour": "red"})
    with pytest.raises(ConfigError):
        config_from_dict({"payload_size": 4})


def test_with_seed_reseeds_everything():
    cfg = replace(SMALL, channel=ChannelModel((Awgn(ebn0_db=3.0),), 1)).with_seed(42)
    assert cfg.seed == 42 and cfg.channel.rng_seed == 42


def test_opaque_source():
    res = run_session(replace(SMALL, source="opaque", opaque_bytes=3000))
    assert res.report.ber == 0.0 and res.report.apsnr_db is None and res.reference is None
    assert sum(len(p.payload) for p in res.tx_packets) == 3000
    assert np.all([len(p.payload) <= 256 for p in res.tx_packets])


PRESETS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("path", sorted(PRESETS.glob("*.yaml")), ids=lambda p: p.stem)
def test_presets_load_and_run(path):
    cfg = load_config(path)
    cfg = replace(cfg, video=replace(cfg.video, width=64, height=48, frames=2), payload_size=256)
    rep = run_session(cfg).report
    assert rep.packets_tx > 0
    if path.stem == "wire":
        assert rep.ber == 0.0
    if path.stem == "dead-zone":
        assert rep.frames_absent == 2
