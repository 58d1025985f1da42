"""Transmit blocks, noise-free channel convolution, and classifier features.

The receive block is the full linear convolution of the transmit block with
the sampled impulse response; the classifier consumes the concatenation of
its real and imaginary parts. Direct convolution is used for short outputs
and an FFT product above DIRECT_CONV_LIMIT; both routes agree to 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Output lengths below this use np.convolve; longer ones go through the FFT.
DIRECT_CONV_LIMIT = 256


@dataclass(frozen=True)
class SignalFrame:
    """One (tx, rx, features) triple; len(rx) = len(tx) + cir_length - 1."""

    tx: np.ndarray
    rx: np.ndarray
    features: np.ndarray


def generate_tx(n: int, seed, scheme: str = "qpsk") -> np.ndarray:
    """Draw a unit-average-power transmit block, deterministic per seed.

    scheme "qpsk": symbols from {(+-1 +- 1j)/sqrt(2)}, |x_i| = 1 exactly.
    scheme "complex-gaussian": standard complex normal, unit power in
    expectation.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if scheme == "qpsk":
        re = rng.integers(0, 2, size=n) * 2 - 1
        im = rng.integers(0, 2, size=n) * 2 - 1
        return (re + 1j * im) / np.sqrt(2.0)
    if scheme == "complex-gaussian":
        return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    raise ValueError(f"unknown tx scheme: {scheme!r}")


def convolve(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Full linear convolution, output length len(x) + len(h) - 1."""
    x = np.asarray(x)
    h = np.asarray(h)
    if x.size == 0 or h.size == 0:
        raise ValueError("convolve requires nonempty inputs")
    n_out = x.size + h.size - 1
    if n_out < DIRECT_CONV_LIMIT:
        return np.convolve(x, h)
    n_fft = 1 << int(np.ceil(np.log2(n_out)))
    y = np.fft.ifft(np.fft.fft(x, n_fft) * np.fft.fft(h, n_fft))[:n_out]
    if not (np.iscomplexobj(x) or np.iscomplexobj(h)):
        return y.real
    return y


def featurize(rx: np.ndarray) -> np.ndarray:
    """Concatenate real parts then imaginary parts: length 2 * len(rx)."""
    rx = np.asarray(rx)
    return np.concatenate([rx.real, rx.imag]).astype(np.float64)


def defeaturize(features: np.ndarray) -> np.ndarray:
    """Inverse of featurize: rebuild the complex vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.size % 2 != 0:
        raise ValueError("feature vector length must be even")
    half = features.size // 2
    return features[:half] + 1j * features[half:]


def make_frame(tx: np.ndarray, h: np.ndarray, include_tx: bool = False) -> SignalFrame:
    """Push tx through the channel h and featurize the result.

    include_tx prepends featurize(tx) to the feature vector for setups where
    the transmit block varies per sample.
    """
    rx = convolve(tx, h)
    features = featurize(rx)
    if include_tx:
        features = np.concatenate([featurize(tx), features])
    return SignalFrame(tx=np.asarray(tx), rx=rx, features=features)
