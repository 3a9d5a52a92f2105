from .chain import GenieRxStream, RxStream, TxStream, coherent_detect, estimate_coarse_offset, idle_bits, rx_chain, tx_chain
from .config import DEFAULT_SAMPLE_RATE, IqBuffer, ModemConfig, RxDiagnostics
from .estimators import BpskDemodulator, BpskModulator
from .filters import ber_vs_ebn0_reference, bits_to_symbols, cascade_isi, rrc_taps
from .iqfile import IqWriter, read_iq, write_iq

__all__ = [
    "DEFAULT_SAMPLE_RATE",
    "BpskDemodulator",
    "BpskModulator",
    "GenieRxStream",
    "IqBuffer",
    "IqWriter",
    "ModemConfig",
    "RxDiagnostics",
    "RxStream",
    "TxStream",
    "ber_vs_ebn0_reference",
    "bits_to_symbols",
    "cascade_isi",
    "coherent_detect",
    "estimate_coarse_offset",
    "idle_bits",
    "read_iq",
    "rrc_taps",
    "rx_chain",
    "tx_chain",
    "write_iq",
]
