from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_SAMPLE_RATE = 500e3


@dataclass(frozen=True)
class ModemConfig:
    """Parameters of the BPSK/RRC transmitter and receiver.

    Loop bandwidths are normalized to the symbol rate (B_n * T). Both
    loops are second order with the given damping (1.0 = critical).
    """

    samples_per_symbol: int = 4
    rrc_rolloff: float = 0.35
    rrc_span_symbols: int = 12
    timing_loop_bw: float = 0.01
    carrier_loop_bw: float = 0.005
    loop_damping: float = 1.0
    sample_rate: float = DEFAULT_SAMPLE_RATE
    ramp_symbols: int = 256
    tail_symbols: int = 16
    acquisition_samples: int = 16384
    nyquist_correction: bool = True

    def __post_init__(self):
        if int(self.samples_per_symbol) != self.samples_per_symbol or self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be an integer >= 2")
        if not 0.0 < self.rrc_rolloff <= 1.0:
            raise ValueError("rrc_rolloff must lie in (0, 1]")
        if self.rrc_span_symbols < 4 or self.rrc_span_symbols % 2:
            raise ValueError("rrc_span_symbols must be an even integer >= 4")
        for name in ("timing_loop_bw", "carrier_loop_bw", "loop_damping", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.ramp_symbols < 0 or self.tail_symbols < 0 or self.acquisition_samples < 1:
            raise ValueError("ramp/tail lengths must be >= 0 and acquisition_samples >= 1")

    @property
    def symbol_rate(self) -> float:
        return self.sample_rate / self.samples_per_symbol

    @property
    def filter_delay(self) -> int:
        """Group delay of one RRC filter, in samples."""
        return self.rrc_span_symbols * self.samples_per_symbol // 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IqBuffer:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class RxDiagnostics:
    freq_offset_hz: float
    coarse_freq_offset_hz: float
    residual_phase_var: float
    carrier_lock_metric: float
    timing_lock_metric: float
    carrier_locked: bool
    timing_locked: bool
    n_symbols: int

    @property
    def locked(self) -> bool:
        return self.carrier_locked and self.timing_locked
