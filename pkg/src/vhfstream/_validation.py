"""Input checks shared by the estimator wrappers and the pipeline."""
from __future__ import annotations

import numpy as np


def check_bits(bits, *, name: str = "bits") -> np.ndarray:
    """Return ``bits`` as a 1-D uint8 array of zeros and ones."""
    arr = np.asarray(bits)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.uint8, copy=False)


def check_iq(samples, *, name: str = "samples") -> np.ndarray:
    """Return a finite 1-D complex128 sample array."""
    from .modem.config import IqBuffer

    if isinstance(samples, IqBuffer):
        return samples.samples
    arr = np.asarray(samples)
    if arr.ndim == 2 and arr.shape[1] == 2 and not np.iscomplexobj(arr):
        arr = arr[:, 0] + 1j * arr[:, 1]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional complex, got shape {arr.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contain NaN or Inf")
    return arr


def check_positive(value, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
