import math

import numpy as np
import pytest

from vhfstream.channel import (
    Awgn, BurstDrop, ChannelModel, ChannelSimulator, ChannelStream, Cfo, Ideal, Multipath, apply,
    calibrate_awgn, channel_from_dict, channel_to_dict, dump_channel, load_channel,
)
from vhfstream.errors import ConfigError
from vhfstream.modem import IqBuffer

FS = 500e3


def _iq(n=4096, seed=0):
    rng = np.random.default_rng(seed)
    return IqBuffer(rng.standard_normal(n) + 1j * rng.standard_normal(n), FS)


def test_ideal_is_identity():
    x = _iq()
    np.testing.assert_array_equal(apply(ChannelModel((Ideal(),)), x).samples, x.samples)


def test_single_unit_tap_equals_ideal():
    x = _iq()
    y = apply(ChannelModel((Multipath(((0, 1.0),)),)), x)
    np.testing.assert_array_equal(y.samples, x.samples)


def test_multipath_is_a_convolution_with_tail():
    x = _iq(100)
    mp = Multipath(((0, 1.0), (3, 0.5 - 0.25j)))
    y = apply(ChannelModel((mp,)), x).samples
    assert y.size == 103
    np.testing.assert_allclose(y, np.convolve(x.samples, [1, 0, 0, 0.5 - 0.25j]), atol=1e-12)


def test_cfo_rotation():
    x = IqBuffer(np.ones(1000, complex), FS)
    y = apply(ChannelModel((Cfo(1000.0, 0.5),)), x).samples
    n = np.arange(1000)
    np.testing.assert_allclose(y, np.exp(1j * (2 * np.pi * 1000.0 / FS * n + 0.5)), atol=1e-12)


def test_burst_drop_zeroes_interval():
    x = _iq(1000)
    y = apply(ChannelModel((BurstDrop(((100, 200), (900, 2000))),)), x).samples
    assert np.all(y[100:200] == 0) and np.all(y[900:] == 0)
    np.testing.assert_array_equal(y[:100], x.samples[:100])
    np.testing.assert_array_equal(y[200:900], x.samples[200:900])


def test_awgn_statistics():
    n = 1_000_000
    model = ChannelModel((Awgn(snr_db=0.0),), 11)
    y = apply(model, IqBuffer(np.zeros(n, complex), FS), signal_power=1.0).samples
    sigma2 = 0.5  # per component at 0 dB SNR for unit power
    for comp in (y.real, y.imag):
        assert abs(comp.mean()) < 4 * math.sqrt(sigma2 / n)
        assert comp.var() == pytest.approx(sigma2, rel=0.01)


def test_seed_determinism_and_sensitivity():
    x = _iq()
    a = apply(ChannelModel((Awgn(ebn0_db=3.0),), 5), x).samples
    b = apply(ChannelModel((Awgn(ebn0_db=3.0),), 5), x).samples
    c = apply(ChannelModel((Awgn(ebn0_db=3.0),), 6), x).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_block_split_invariance():
    x = _iq(10_000, 3)
    model = ChannelModel((Cfo(321.0, 0.1), Multipath(((0, 1.0), (5, 0.2j))), Awgn(ebn0_db=2.0),
                          BurstDrop(((4000, 4500),))), 17)
    whole = apply(model, x, signal_power=1.0).samples
    stream = ChannelStream(model, FS, signal_power=1.0)
    parts = [stream.process(x.samples[i:i + 777]) for i in range(0, x.samples.size, 777)] + [stream.flush()]
    np.testing.assert_allclose(np.concatenate(parts), whole, atol=1e-12)


def test_order_matters():
    x = IqBuffer(np.ones(2000, complex), FS)
    drop = BurstDrop(((500, 1000),))
    noise = Awgn(snr_db=10.0)
    # noise then erasure leaves exact zeros; erasure then noise does not
    a = apply(ChannelModel((noise, drop), 1), x, signal_power=1.0).samples
    b = apply(ChannelModel((drop, noise), 1), x, signal_power=1.0).samples
    assert np.all(a[500:1000] == 0) and np.all(b[500:1000] != 0)
    # an offset ahead of a delay line is seen by the echo with the echo's delay
    cfo, mp = Cfo(5000.0), Multipath(((0, 1.0), (4, 0.5)))
    c = apply(ChannelModel((cfo, mp)), x).samples
    d = apply(ChannelModel((mp, cfo)), x).samples
    w = 2 * np.pi * 5000.0 / FS
    n = np.arange(c.size)
    np.testing.assert_allclose(d[4:2000], np.exp(1j * w * n[4:2000]) * 1.5, atol=1e-12)
    np.testing.assert_allclose(c[4:2000], np.exp(1j * w * n[4:2000]) * (1 + 0.5 * np.exp(-4j * w)), atol=1e-12)


def test_calibrate_awgn_examples():
    unit = IqBuffer(np.ones(64, complex), FS)
    assert calibrate_awgn(unit, 0.0, 1, 4) == pytest.approx(2.0)
    assert calibrate_awgn(unit, float("inf"), 1, 4) == 0.0
    double = IqBuffer(np.full(64, math.sqrt(2), complex), FS)
    assert calibrate_awgn(double, 3.0, 1, 4) == pytest.approx(2 * calibrate_awgn(unit, 3.0, 1, 4))
    with pytest.raises(ValueError):
        calibrate_awgn(IqBuffer(np.zeros(4, complex), FS), 3.0)


def test_stage_validation():
    with pytest.raises(ConfigError):
        Awgn()
    with pytest.raises(ConfigError):
        Awgn(ebn0_db=1.0, snr_db=1.0)
    with pytest.raises(ConfigError):
        Multipath(((1, 1.0),))
    with pytest.raises(ConfigError):
        Multipath(((0, 0.0),))
    with pytest.raises(ConfigError):
        BurstDrop(((10, 20), (15, 30)))
    with pytest.raises(ConfigError):
        ChannelModel(rng_seed=-1)


def test_description_file_roundtrip(tmp_path):
    model = ChannelModel((Cfo(50.0, 0.3), Multipath(((0, 1.0), (3, 0.3 - 0.1j))), Awgn(ebn0_db=6.0),
                          BurstDrop(((100000, 200000),))), 7)
    path = tmp_path / "ch.yaml"
    path.write_text(dump_channel(model))
    assert load_channel(path) == model
    assert channel_from_dict(channel_to_dict(model)) == model


def test_description_file_example(tmp_path):
    path = tmp_path / "ch.yaml"
    path.write_text("rng_seed: 3\nstages:\n  - {type: awgn, snr_db: 12}\n  - {type: cfo, offset_hz: -20}\n")
    assert load_channel(path) == ChannelModel((Awgn(snr_db=12.0), Cfo(-20.0)), 3)
    with pytest.raises(ConfigError, match="unknown"):
        channel_from_dict({"stages": [{"type": "rain"}]})


def test_simulator_estimator():
    sim = ChannelSimulator(stages=[{"type": "cfo", "offset_hz": 10.0}], rng_seed=2)
    x = _iq(256).samples
    y = sim.fit().transform(x)
    assert y.shape == x.shape
    assert sim.get_params()["rng_seed"] == 2
