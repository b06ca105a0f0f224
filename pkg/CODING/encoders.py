import logging
from typing import Optional, Tuple

import numpy as np

from .schemes import CodingKind, CodingScheme, phase_weight

logger = logging.getLogger(__name__)

# Real injection shares the normalized activation unit with weighted spikes.
REAL_INPUT_SCALE = 1.0
_RATE_EPS = 1e-9


def encode_input_real(pixels: np.ndarray) -> np.ndarray:
    """Analog input values fed to the first layer every step; no spikes are produced."""
    return np.asarray(pixels, dtype=np.float64) * REAL_INPUT_SCALE


def rate_spike_counts(pixels: np.ndarray, steps: int) -> np.ndarray:
    """Spikes emitted in the first `steps` steps by an IF encoder integrating each pixel with threshold 1."""
    return np.floor(np.asarray(pixels, dtype=np.float64) * steps + _RATE_EPS)


def encode_input_rate(pixels: np.ndarray, t: int) -> np.ndarray:
    """
    Spikes of the deterministic rate encoder at step t (0-based).

    Each input neuron integrates its pixel value with threshold 1.0 and
    reset-by-subtraction, so it fires at step t exactly when floor(p*(t+1))
    exceeds floor(p*t). Over T steps the count is floor(p*T).
    """
    return rate_spike_counts(pixels, t + 1) > rate_spike_counts(pixels, t)


def quantize_phase(pixels: np.ndarray, k: int) -> np.ndarray:
    levels = 2 ** k
    q = np.floor(np.asarray(pixels, dtype=np.float64) * levels).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def encode_input_phase(pixels: np.ndarray, k: int, t: int) -> Tuple[np.ndarray, float]:
    """
    Spikes of the phase encoder at step t and the weight Pi(t) they carry.

    Pixels are quantized to k bits; within each period the most significant bit
    is sent first, so the Pi-weighted sum over one period equals q / 2^k.
    """
    q = quantize_phase(pixels, k)
    bit = k - 1 - (t % k)
    spikes = ((q >> bit) & 1).astype(bool)
    return spikes, phase_weight(t, k)


class InputEncoder:
    """
    Step-wise input layer for one batch of images.

    `step(t)` returns the weighted input seen by the first layer at step t and
    the spike flags (None for real coding, whose injection is not spiking).
    """

    def __init__(self, scheme: CodingScheme, pixels: np.ndarray):
        if scheme.kind == CodingKind.BURST:
            raise ValueError("burst coding is a hidden-layer scheme and cannot encode inputs")
        self.scheme = scheme
        self.pixels = np.asarray(pixels, dtype=np.float64)
        self.gain = scheme.threshold
        if scheme.kind == CodingKind.PHASE:
            self._q = quantize_phase(self.pixels, scheme.k)
        elif scheme.kind == CodingKind.REAL:
            self._real = encode_input_real(self.pixels) * self.gain

    @property
    def is_spiking(self) -> bool:
        return self.scheme.kind != CodingKind.REAL

    def step(self, t: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        kind = self.scheme.kind
        if kind == CodingKind.REAL:
            return self._real, None
        if kind == CodingKind.RATE:
            spikes = encode_input_rate(self.pixels, t)
            return spikes * self.gain, spikes
        bit = self.scheme.k - 1 - (t % self.scheme.k)
        spikes = ((self._q >> bit) & 1).astype(bool)
        return spikes * (phase_weight(t, self.scheme.k) * self.gain), spikes
