"""scikit-learn style wrappers so the modem composes with Pipelines and grid tools."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_bits, check_iq
from .chain import rx_chain, tx_chain
from .config import DEFAULT_SAMPLE_RATE, ModemConfig
from .filters import rrc_taps


class _ModemParams(BaseEstimator):
    def _make_config(self) -> ModemConfig:
        return ModemConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self._make_config()
        self.taps_ = rrc_taps(self.config_)
        return self


class BpskModulator(TransformerMixin, _ModemParams):
    """Bits in, RRC-shaped complex baseband out."""

    def __init__(
        self,
        samples_per_symbol=4,
        rrc_rolloff=0.35,
        rrc_span_symbols=12,
        sample_rate=DEFAULT_SAMPLE_RATE,
        ramp_symbols=256,
        tail_symbols=16,
    ):
        self.samples_per_symbol = samples_per_symbol
        self.rrc_rolloff = rrc_rolloff
        self.rrc_span_symbols = rrc_span_symbols
        self.sample_rate = sample_rate
        self.ramp_symbols = ramp_symbols
        self.tail_symbols = tail_symbols

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "config_")
        return tx_chain(check_bits(X), self.config_).samples


class BpskDemodulator(TransformerMixin, _ModemParams):
    """Complex baseband in, hard-decision bits out.

    After ``transform`` the receiver's lock and offset estimates are
    available as ``diagnostics_``.
    """

    def __init__(
        self,
        samples_per_symbol=4,
        rrc_rolloff=0.35,
        rrc_span_symbols=12,
        timing_loop_bw=0.01,
        carrier_loop_bw=0.005,
        loop_damping=1.0,
        sample_rate=DEFAULT_SAMPLE_RATE,
        acquisition_samples=16384,
    ):
        self.samples_per_symbol = samples_per_symbol
        self.rrc_rolloff = rrc_rolloff
        self.rrc_span_symbols = rrc_span_symbols
        self.timing_loop_bw = timing_loop_bw
        self.carrier_loop_bw = carrier_loop_bw
        self.loop_damping = loop_damping
        self.sample_rate = sample_rate
        self.acquisition_samples = acquisition_samples

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "config_")
        bits, self.diagnostics_ = rx_chain(check_iq(X), self.config_)
        return bits
