"""Transmit and receive chains, as streams with carried state and as one-shot calls."""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from . import _kernels
from .config import IqBuffer, ModemConfig, RxDiagnostics
from .filters import bits_to_symbols, gardner_gain, loop_gains, rrc_taps

DEFAULT_BLOCK = 1 << 18
_DIAG_WINDOW = 2048


def idle_bits(n: int) -> np.ndarray:
    """Alternating 1010... fill used for the acquisition ramp and the tail."""
    return (np.arange(n) % 2 == 0).astype(np.uint8)


def _as_bits(bits) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must contain only 0 and 1")
    return bits.astype(np.uint8, copy=False)


class TxStream:
    """Block-wise BPSK modulator with RRC pulse shaping.

    The first ``process`` call is preceded by ``config.ramp_symbols`` of
    idle fill; ``flush`` appends the tail and drains the filter.
    """

    def __init__(self, config: ModemConfig | None = None):
        self.config = config or ModemConfig()
        self.taps = rrc_taps(self.config)
        self._zi = np.zeros(self.taps.size - 1)
        self._started = False
        self.n_symbols = 0

    def _shape(self, symbols: np.ndarray) -> np.ndarray:
        sps = self.config.samples_per_symbol
        up = np.zeros(symbols.size * sps)
        up[::sps] = symbols
        out, self._zi = lfilter(self.taps, 1.0, up, zi=self._zi)
        self.n_symbols += symbols.size
        return out

    def process(self, bits) -> np.ndarray:
        symbols = bits_to_symbols(_as_bits(bits))
        if not self._started:
            self._started = True
            symbols = np.concatenate([bits_to_symbols(idle_bits(self.config.ramp_symbols)), symbols])
        return self._shape(symbols).astype(np.complex128)

    def flush(self) -> np.ndarray:
        head = self.process(np.zeros(0, np.uint8)) if not self._started else np.zeros(0, np.complex128)
        tail = self._shape(bits_to_symbols(idle_bits(self.config.tail_symbols)))
        drain, self._zi = lfilter(self.taps, 1.0, np.zeros(self.taps.size - 1), zi=self._zi)
        return np.concatenate([head, tail, drain]).astype(np.complex128)


def tx_chain(bits, config: ModemConfig | None = None) -> IqBuffer:
    config = config or ModemConfig()
    stream = TxStream(config)
    body = stream.process(bits)
    return IqBuffer(np.concatenate([body, stream.flush()]), config.sample_rate)


def estimate_coarse_offset(x: np.ndarray, lag: int) -> float:
    """Carrier offset in rad/sample from the squared signal (modulation removed).

    For a real BPSK waveform rotated by w*n, x^2 = |y|^2 e^{j 2 w n}, so the
    lag-``lag`` autocorrelation of x^2 has phase 2*w*lag.
    """
    if x.size <= lag:
        return 0.0
    sq = x * x
    r = np.vdot(sq[:-lag], sq[lag:])
    if r == 0:
        return 0.0
    return float(np.angle(r) / (2.0 * lag))


class RxStream:
    """Block-wise BPSK receiver.

    Order of operations: squaring-based carrier offset estimate over the
    matched-filtered first ``acquisition_samples`` and de-rotation of the
    input, matched RRC filter,
    Gardner timing loop with parabolic interpolation, then a
    decision-directed second-order phase loop on the symbol strobes and a
    hard slicer. Output bits may be globally inverted (180 degree
    ambiguity); framing resolves that from the preamble polarity.
    """

    def __init__(self, config: ModemConfig | None = None):
        self.config = config or ModemConfig()
        c = self.config
        self.taps = rrc_taps(c)
        k1t, k2t = loop_gains(c.timing_loop_bw, c.loop_damping, gardner_gain(c))
        k1c, k2c = loop_gains(c.carrier_loop_bw, c.loop_damping, 1.0)
        self._gains = np.array([float(c.samples_per_symbol), k1t, k2t, k1c, k2c])
        self._state = np.array([float(self.taps.size - 1), 0.0, 0.0, 0.0, 0.0, 0.0])
        self._zi = np.zeros(self.taps.size - 1, dtype=np.complex128)
        self._buf = np.zeros(0, dtype=np.complex128)
        self._pending: list[np.ndarray] = []
        self._n_pending = 0
        self._omega: float | None = None
        self._n_in = 0
        self._recent_sym = np.zeros(0, dtype=np.complex128)
        self._recent_err = np.zeros(0)
        self.n_symbols = 0

    def _run(self, x: np.ndarray) -> np.ndarray:
        if not x.size:
            return np.zeros(0, dtype=np.uint8)
        n = np.arange(self._n_in, self._n_in + x.size, dtype=np.float64)
        self._n_in += x.size
        if self._omega:
            x = x * np.exp(-1j * self._omega * n)
        y, self._zi = lfilter(self.taps, 1.0, x, zi=self._zi)
        buf = np.concatenate([self._buf, y])
        cap = int(2 * buf.size / self.config.samples_per_symbol) + 4
        bits = np.empty(cap, dtype=np.uint8)
        syms = np.empty(cap, dtype=np.complex128)
        errs = np.empty(cap)
        count = _kernels.sync_block(buf, self._state, self._gains, bits, syms, errs)
        half = 0.5 * self.config.samples_per_symbol
        keep_from = max(0, int(math.floor(self._state[0] - half)) - 2)
        self._buf = buf[keep_from:]
        self._state[0] -= keep_from
        self.n_symbols += count
        self._recent_sym = np.concatenate([self._recent_sym, syms[:count]])[-_DIAG_WINDOW:]
        self._recent_err = np.concatenate([self._recent_err, errs[:count]])[-_DIAG_WINDOW:]
        return bits[:count]

    def _acquire(self) -> np.ndarray:
        raw = np.concatenate(self._pending) if self._pending else np.zeros(0, np.complex128)
        self._pending, self._n_pending = [], 0
        if raw.size:
            head = lfilter(self.taps, 1.0, raw[: self.config.acquisition_samples])[self.taps.size:]
            self._omega = estimate_coarse_offset(head, self.config.samples_per_symbol)
        else:
            self._omega = 0.0
        return self._run(raw)

    def process(self, samples) -> np.ndarray:
        x = np.asarray(samples, dtype=np.complex128)
        if self._omega is None:
            self._pending.append(x)
            self._n_pending += x.size
            if self._n_pending < self.config.acquisition_samples:
                return np.zeros(0, dtype=np.uint8)
            return self._acquire()
        return self._run(x)

    def flush(self) -> np.ndarray:
        out = [self._acquire()] if self._omega is None else []
        out.append(self._run(np.zeros(self.taps.size + 2, dtype=np.complex128)))
        return np.concatenate(out)

    @property
    def freq_offset_hz(self) -> float:
        c = self.config
        omega = (self._omega or 0.0) + self._state[5] / c.samples_per_symbol
        return omega * c.sample_rate / (2 * np.pi)

    def diagnostics(self) -> RxDiagnostics:
        c = self.config
        z = self._recent_sym
        if z.size:
            power = np.mean(np.abs(z) ** 2)
            carrier_metric = float(np.mean(z.real**2 - z.imag**2) / power) if power > 0 else 0.0
            mean_sq = np.mean(z.real**2)
            timing_metric = float(np.mean(np.abs(z.real)) ** 2 / mean_sq) if mean_sq > 0 else 0.0
            phase_var = float(np.var(self._recent_err))
        else:
            carrier_metric = timing_metric = phase_var = 0.0
        return RxDiagnostics(
            freq_offset_hz=float(self.freq_offset_hz),
            coarse_freq_offset_hz=float((self._omega or 0.0) * c.sample_rate / (2 * np.pi)),
            residual_phase_var=phase_var,
            carrier_lock_metric=carrier_metric,
            timing_lock_metric=timing_metric,
            carrier_locked=carrier_metric > 0.5,
            timing_locked=timing_metric > 0.6,
            n_symbols=self.n_symbols,
        )


def rx_chain(
    iq: IqBuffer | np.ndarray,
    config: ModemConfig | None = None,
    *,
    block_size: int = DEFAULT_BLOCK,
) -> tuple[np.ndarray, RxDiagnostics]:
    config = config or ModemConfig()
    samples = iq.samples if isinstance(iq, IqBuffer) else np.asarray(iq, dtype=np.complex128)
    stream = RxStream(config)
    parts = [stream.process(samples[i:i + block_size]) for i in range(0, samples.size, block_size)]
    parts.append(stream.flush())
    return np.concatenate(parts), stream.diagnostics()


def coherent_detect(
    iq: IqBuffer | np.ndarray,
    config: ModemConfig | None = None,
    *,
    n_symbols: int | None = None,
    delay: int = 0,
    cfo_hz: float = 0.0,
    phase: float = 0.0,
) -> np.ndarray:
    """Genie-aided detector: matched filter sampled at the known symbol instants.

    Carrier offset, phase and channel delay are supplied rather than
    estimated, isolating the detector from synchronization losses. Returns
    one bit per transmitted symbol, ramp and tail included.
    """
    config = config or ModemConfig()
    samples = iq.samples if isinstance(iq, IqBuffer) else np.asarray(iq, dtype=np.complex128)
    n = np.arange(samples.size)
    x = samples * np.exp(-1j * (2 * np.pi * cfo_hz / config.sample_rate * n + phase))
    taps = rrc_taps(config)
    sps = config.samples_per_symbol
    if n_symbols is None:
        n_symbols = (samples.size - delay - taps.size + 1) // sps
    first = taps.size - 1 + delay
    idx = first + sps * np.arange(n_symbols)
    # matched filter evaluated only at the strobes
    y = np.zeros(n_symbols)
    for k, tap in enumerate(taps):
        src = idx - k
        ok = (src >= 0) & (src < samples.size)
        y[ok] += tap * x[src[ok]].real
    return (y >= 0).astype(np.uint8)


class GenieRxStream:
    """Streaming counterpart of :func:`coherent_detect` (known delay, offset and phase)."""

    def __init__(self, config: ModemConfig | None = None, *, delay: int = 0,
                 cfo_hz: float = 0.0, phase: float = 0.0):
        self.config = config or ModemConfig()
        self.taps = rrc_taps(self.config)
        self._zi = np.zeros(self.taps.size - 1, dtype=np.complex128)
        self._omega = 2 * np.pi * cfo_hz / self.config.sample_rate
        self._phase = phase
        self._n_in = 0
        self._next = self.taps.size - 1 + delay
        self.n_symbols = 0

    def process(self, samples) -> np.ndarray:
        x = np.asarray(samples, dtype=np.complex128)
        if not x.size:
            return np.zeros(0, dtype=np.uint8)
        start = self._n_in
        n = np.arange(start, start + x.size, dtype=np.float64)
        self._n_in += x.size
        y, self._zi = lfilter(self.taps, 1.0, x * np.exp(-1j * (self._omega * n + self._phase)), zi=self._zi)
        sps = self.config.samples_per_symbol
        if self._next >= self._n_in:
            return np.zeros(0, dtype=np.uint8)
        idx = np.arange(self._next, self._n_in, sps)
        self._next = int(idx[-1]) + sps
        self.n_symbols += idx.size
        return (y[idx - start].real >= 0).astype(np.uint8)

    def flush(self) -> np.ndarray:
        return self.process(np.zeros(self.taps.size - 1, dtype=np.complex128))

    def diagnostics(self) -> RxDiagnostics:
        hz = self._omega * self.config.sample_rate / (2 * np.pi)
        return RxDiagnostics(hz, hz, 0.0, 1.0, 1.0, True, True, self.n_symbols)
