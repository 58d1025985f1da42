"""Synthetic multipath channel generator with exact, known tap counts.

A channel realization is a list of discrete taps (complex gain, unit-modulus
phase drift, delay, departure/arrival angles). Tap delays are snapped to the
sampling grid at generation time, so the number of nonzero entries of the
sampled impulse response always equals the ground-truth label. Tap powers
follow an exponential power-delay profile exp(-pdp_decay * delay).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridLengthError, PlacementInfeasibleError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Tap:
    """One resolvable multipath component."""

    gain: complex                # complex amplitude, linear scale
    time_variation: complex      # unit-magnitude phase factor, static per frame
    delay: float                 # seconds, >= 0
    aod: float                   # angle of departure, radians in [0, 2pi)
    aoa: float                   # angle of arrival, radians in [0, 2pi)


@dataclass(frozen=True)
class ChannelRealization:
    """An ordered (ascending delay) list of taps plus the sampling grid."""

    taps: tuple[Tap, ...]
    sample_rate: float           # Hz
    label: int                   # ground-truth tap count

    def delays(self) -> np.ndarray:
        return np.array([t.delay for t in self.taps])

    def energy(self) -> float:
        """Total tap energy sum |gain|^2."""
        return float(sum(abs(t.gain) ** 2 for t in self.taps))


@dataclass(frozen=True)
class ChannelClassSpec:
    """Parameters of one channel class; classes differ only in n_taps.

    n_taps must fit on the delay grid: n_taps <= floor(max_delay * sample_rate),
    otherwise collision-free placement is impossible.
    """

    n_taps: int
    max_delay: float             # seconds; all delays are strictly below this
    pdp_decay: float = 0.0       # 1/seconds, exponential power-delay-profile rate
    sample_rate: float = 1.0     # Hz

    def __post_init__(self):
        if self.n_taps < 1:
            raise ValueError(f"n_taps must be >= 1, got {self.n_taps}")
        if self.max_delay <= 0:
            raise ValueError(f"max_delay must be > 0, got {self.max_delay}")
        if self.pdp_decay < 0:
            raise ValueError(f"pdp_decay must be >= 0, got {self.pdp_decay}")
        if self.n_taps > self.grid_size():
            raise PlacementInfeasibleError(
                f"cannot place {self.n_taps} collision-free taps on a "
                f"{self.grid_size()}-position grid"
            )

    def grid_size(self) -> int:
        """Number of distinct sample positions a tap can occupy."""
        return int(np.floor(self.max_delay * self.sample_rate))


def sample_channel(spec: ChannelClassSpec, seed) -> ChannelRealization:
    """Draw one channel realization with exactly spec.n_taps taps.

    The first tap sits at delay 0; the remaining delays are drawn uniformly
    without replacement from the sample grid, so no two taps collide. Gains
    are beta_l = exp(-pdp_decay * tau_l / 2) * g_l with g_l standard complex
    normal; phases and angles are uniform. Pure function of (spec, seed).
    """
    rng = np.random.default_rng(seed)
    grid = spec.grid_size()

    indices = np.zeros(spec.n_taps, dtype=np.int64)
    if spec.n_taps > 1:
        indices[1:] = np.sort(
            rng.choice(np.arange(1, grid), size=spec.n_taps - 1, replace=False)
        )
    delays = indices / spec.sample_rate

    # standard complex normal: unit-variance total, split over re/im
    g = (rng.standard_normal(spec.n_taps) + 1j * rng.standard_normal(spec.n_taps)) / np.sqrt(2.0)
    gains = np.exp(-0.5 * spec.pdp_decay * delays) * g
    phases = np.exp(1j * rng.uniform(0.0, TWO_PI, size=spec.n_taps))
    aods = rng.uniform(0.0, TWO_PI, size=spec.n_taps)
    aoas = rng.uniform(0.0, TWO_PI, size=spec.n_taps)

    taps = tuple(
        Tap(
            gain=complex(gains[i]),
            time_variation=complex(phases[i]),
            delay=float(delays[i]),
            aod=float(aods[i]),
            aoa=float(aoas[i]),
        )
        for i in range(spec.n_taps)
    )
    return ChannelRealization(taps=taps, sample_rate=spec.sample_rate, label=spec.n_taps)


def discretize_cir(ch: ChannelRealization, length: int) -> np.ndarray:
    """Sample the tap train onto a length-`length` complex impulse response.

    h[round(delay * sample_rate)] = gain * time_variation per tap. Raises
    GridLengthError if any tap falls outside the grid. Delays are on-grid by
    construction, so the nonzero count of h equals the label.
    """
    h = np.zeros(length, dtype=np.complex128)
    for tap in ch.taps:
        idx = int(round(tap.delay * ch.sample_rate))
        if idx >= length:
            raise GridLengthError(
                f"tap at delay {tap.delay} maps to index {idx}, grid length {length}"
            )
        h[idx] = tap.gain * tap.time_variation
    return h
