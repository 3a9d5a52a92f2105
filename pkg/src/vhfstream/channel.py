"""Composable channel impairments applied to complex baseband.

A :class:`ChannelModel` is an ordered tuple of stages plus a seed. Stages
run in order, each over the output of the previous one. Each noise stage
draws from its own generator spawned from the model seed
(``numpy.random.SeedSequence(seed).spawn``, PCG64, ziggurat normals), so
results do not depend on how the input is split into blocks.

Description files are YAML::

    rng_seed: 7
    stages:
      - {type: cfo, offset_hz: 50.0, initial_phase_rad: 0.3}
      - {type: multipath, taps: [[0, 1.0], [3, [0.3, -0.1]]]}
      - {type: awgn, ebn0_db: 6.0}
      - {type: burst_drop, intervals: [[100000, 200000]]}

Multipath gains are a real number or an ``[re, im]`` pair; burst-drop
intervals are ``[start, end)`` sample indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import yaml
from scipy.signal import lfilter
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_iq
from .errors import ConfigError
from .modem.config import IqBuffer


@dataclass(frozen=True)
class Ideal:
    pass


@dataclass(frozen=True)
class Awgn:
    ebn0_db: float | None = None
    snr_db: float | None = None

    def __post_init__(self):
        if (self.ebn0_db is None) == (self.snr_db is None):
            raise ConfigError("awgn stage needs exactly one of ebn0_db, snr_db")


@dataclass(frozen=True)
class Cfo:
    offset_hz: float
    initial_phase_rad: float = 0.0


@dataclass(frozen=True)
class Multipath:
    taps: tuple[tuple[int, complex], ...]

    def __post_init__(self):
        taps = tuple((int(d), complex(g)) for d, g in self.taps)
        object.__setattr__(self, "taps", taps)
        if not taps:
            raise ConfigError("multipath stage needs at least one tap")
        delays = [d for d, _ in taps]
        if min(delays) < 0:
            raise ConfigError("multipath delays must be non-negative")
        if delays[0] != 0:
            raise ConfigError("first multipath tap must be at delay 0")
        if sum(abs(g) ** 2 for _, g in taps) <= 0:
            raise ConfigError("multipath taps carry no power")

    @property
    def max_delay(self) -> int:
        return max(d for d, _ in self.taps)

    def impulse_response(self) -> np.ndarray:
        h = np.zeros(self.max_delay + 1, dtype=np.complex128)
        for d, g in self.taps:
            h[d] += g
        return h


@dataclass(frozen=True)
class BurstDrop:
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        iv = tuple((int(a), int(b)) for a, b in self.intervals)
        object.__setattr__(self, "intervals", iv)
        prev_end = None
        for a, b in iv:
            if b < a or a < 0:
                raise ConfigError(f"bad drop interval [{a}, {b})")
            if prev_end is not None and a < prev_end:
                raise ConfigError("drop intervals must be sorted and non-overlapping")
            prev_end = b


Stage = Union[Ideal, Awgn, Cfo, Multipath, BurstDrop]


@dataclass(frozen=True)
class ChannelModel:
    stages: tuple = field(default_factory=lambda: (Ideal(),))
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")

    @property
    def max_delay(self) -> int:
        return sum(s.max_delay for s in self.stages if isinstance(s, Multipath))

    def with_stage(self, stage) -> "ChannelModel":
        return ChannelModel(self.stages + (stage,), self.rng_seed)


def calibrate_awgn(iq, ebn0_db: float, bits_per_symbol: int = 1, sps: int = 4,
                   *, signal_power: float | None = None) -> float:
    """Per-component (I or Q) noise variance giving the requested Eb/N0.

    With per-sample signal power P, energy per bit is P*sps/bits_per_symbol
    and N0/2 = P*sps / (2 * bits_per_symbol * Eb/N0); that N0/2 is what is
    returned. The complex noise sample therefore has variance twice this.
    """
    if signal_power is None:
        x = check_iq(iq)
        signal_power = float(np.mean(np.abs(x) ** 2)) if x.size else 0.0
    if not signal_power > 0:
        raise ValueError("cannot calibrate noise against a zero-power signal")
    if np.isposinf(ebn0_db):
        return 0.0
    return signal_power * sps / (2.0 * bits_per_symbol * 10.0 ** (ebn0_db / 10.0))


class _StageState:
    def __init__(self, stage, rng, sample_rate, sps, bits_per_symbol, signal_power):
        self.stage = stage
        self.rng = rng
        self.sample_rate = sample_rate
        self.sps = sps
        self.bps = bits_per_symbol
        self.signal_power = signal_power
        self.n = 0
        self.zi = None
        self.sigma = None
        if isinstance(stage, Multipath):
            self.h = stage.impulse_response()
            self.zi = np.zeros(self.h.size - 1, dtype=np.complex128)

    def _noise_std(self, x):
        if self.sigma is None:
            s = self.stage
            power = self.signal_power
            if power is None:
                power = float(np.mean(np.abs(x) ** 2)) if x.size else 0.0
            if s.ebn0_db is not None:
                var = calibrate_awgn(None, s.ebn0_db, self.bps, self.sps, signal_power=power)
            else:
                if not power > 0:
                    raise ValueError("cannot calibrate noise against a zero-power signal")
                var = power / (2.0 * 10.0 ** (s.snr_db / 10.0))
            self.sigma = np.sqrt(var)
        return self.sigma

    def process(self, x: np.ndarray) -> np.ndarray:
        s = self.stage
        start = self.n
        self.n += x.size
        if isinstance(s, Ideal) or x.size == 0 and not isinstance(s, Multipath):
            return x
        if isinstance(s, Awgn):
            sigma = self._noise_std(x)
            w = self.rng.standard_normal((x.size, 2))
            return x + sigma * (w[:, 0] + 1j * w[:, 1])
        if isinstance(s, Cfo):
            n = np.arange(start, start + x.size, dtype=np.float64)
            return x * np.exp(1j * (2 * np.pi * s.offset_hz / self.sample_rate * n + s.initial_phase_rad))
        if isinstance(s, Multipath):
            if x.size == 0:
                return x
            y, self.zi = lfilter(self.h, 1.0, x, zi=self.zi)
            return y
        if isinstance(s, BurstDrop):
            y = x.copy()
            for a, b in s.intervals:
                lo, hi = max(a, start) - start, min(b, start + x.size) - start
                if hi > lo:
                    y[lo:hi] = 0
            return y
        raise TypeError(f"unknown stage {s!r}")

    def drain(self) -> np.ndarray:
        if isinstance(self.stage, Multipath) and self.zi.size:
            y, self.zi = lfilter(self.h, 1.0, np.zeros(self.zi.size, np.complex128), zi=self.zi)
            return y
        return np.zeros(0, dtype=np.complex128)


class ChannelStream:
    """Apply a model block by block; ``flush`` returns the multipath tail."""

    def __init__(self, model: ChannelModel, sample_rate: float, *, sps: int = 4,
                 bits_per_symbol: int = 1, signal_power: float | None = None):
        self.model = model
        seeds = np.random.SeedSequence(int(model.rng_seed)).spawn(len(model.stages))
        self._stages = [
            _StageState(st, np.random.Generator(np.random.PCG64(sd)), sample_rate, sps,
                        bits_per_symbol, signal_power)
            for st, sd in zip(model.stages, seeds)
        ]

    def process(self, samples: np.ndarray) -> np.ndarray:
        x = np.asarray(samples, dtype=np.complex128)
        for st in self._stages:
            x = st.process(x)
        return x

    def flush(self) -> np.ndarray:
        carry = np.zeros(0, dtype=np.complex128)
        for st in self._stages:
            carry = st.process(carry) if carry.size else carry
            carry = np.concatenate([carry, st.drain()])
        return carry


def apply(model: ChannelModel, iq: IqBuffer, *, sps: int = 4, bits_per_symbol: int = 1,
          signal_power: float | None = None) -> IqBuffer:
    """Run ``iq`` through every stage of ``model``.

    Noise stages calibrate against ``signal_power`` when given, otherwise
    against the mean power of their input over the whole buffer.
    """
    stream = ChannelStream(model, iq.sample_rate, sps=sps, bits_per_symbol=bits_per_symbol,
                           signal_power=signal_power)
    body = stream.process(iq.samples)
    return IqBuffer(np.concatenate([body, stream.flush()]), iq.sample_rate)


# -- description files ---------------------------------------------------

def _gain(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"complex gain must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(float(value))


def stage_from_dict(d: dict):
    d = dict(d)
    kind = str(d.pop("type", "")).lower()
    try:
        if kind == "ideal":
            return Ideal()
        if kind == "awgn":
            return Awgn(ebn0_db=d.get("ebn0_db"), snr_db=d.get("snr_db"))
        if kind == "cfo":
            return Cfo(float(d["offset_hz"]), float(d.get("initial_phase_rad", 0.0)))
        if kind == "multipath":
            return Multipath(tuple((int(t[0]), _gain(t[1])) for t in d["taps"]))
        if kind in ("burst_drop", "burstdrop"):
            return BurstDrop(tuple((int(a), int(b)) for a, b in d["intervals"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} stage: {exc}") from exc
    raise ConfigError(f"unknown channel stage type {kind!r}")


def stage_to_dict(stage) -> dict:
    if isinstance(stage, Ideal):
        return {"type": "ideal"}
    if isinstance(stage, Awgn):
        key = "ebn0_db" if stage.ebn0_db is not None else "snr_db"
        return {"type": "awgn", key: float(getattr(stage, key))}
    if isinstance(stage, Cfo):
        return {"type": "cfo", "offset_hz": stage.offset_hz, "initial_phase_rad": stage.initial_phase_rad}
    if isinstance(stage, Multipath):
        return {"type": "multipath", "taps": [[d, [g.real, g.imag]] for d, g in stage.taps]}
    if isinstance(stage, BurstDrop):
        return {"type": "burst_drop", "intervals": [list(iv) for iv in stage.intervals]}
    raise TypeError(f"unknown stage {stage!r}")


def channel_from_dict(d: dict) -> ChannelModel:
    if not isinstance(d, dict):
        raise ConfigError("channel description must be a mapping")
    stages = tuple(stage_from_dict(s) for s in d.get("stages", [{"type": "ideal"}]))
    return ChannelModel(stages or (Ideal(),), int(d.get("rng_seed", 0)))


def channel_to_dict(model: ChannelModel) -> dict:
    return {"rng_seed": int(model.rng_seed), "stages": [stage_to_dict(s) for s in model.stages]}


def load_channel(path: str | Path) -> ChannelModel:
    with open(path) as fh:
        return channel_from_dict(yaml.safe_load(fh) or {})


def dump_channel(model: ChannelModel) -> str:
    return yaml.safe_dump(channel_to_dict(model), sort_keys=False)


class ChannelSimulator(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`apply` for use inside Pipelines."""

    def __init__(self, stages=None, rng_seed=0, sample_rate=500e3, samples_per_symbol=4,
                 signal_power=None):
        self.stages = stages
        self.rng_seed = rng_seed
        self.sample_rate = sample_rate
        self.samples_per_symbol = samples_per_symbol
        self.signal_power = signal_power

    def fit(self, X=None, y=None):
        stages = self.stages if self.stages is not None else (Ideal(),)
        stages = tuple(stage_from_dict(s) if isinstance(s, dict) else s for s in stages)
        self.model_ = ChannelModel(stages, self.rng_seed)
        return self

    def transform(self, X) -> np.ndarray:
        x = check_iq(X)
        model = getattr(self, "model_", None) or self.fit().model_
        return apply(model, IqBuffer(x, self.sample_rate), sps=self.samples_per_symbol,
                     signal_power=self.signal_power).samples
