"""SWISS path-count baseline: weighted-DFT reconstruction + threshold count.

A BPSK pilot frame on equispaced OFDM subcarriers yields the noise-free
channel frequency response at the pilot bins. The tap vector is recovered as
the minimum-Euclidean-distance reconstruction under a norm budget,

    min ||H_hat - F c||^2   s.t.  ||c||^2 <= power_budget,

with F the partial DFT dictionary. The dual variable of the budget is found
by Newton's method on g(lambda) = ||c(lambda)||^2 - power_budget. The path
count is the smallest k whose k largest normalized tap energies reach the
threshold eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroEnergyError


@dataclass(frozen=True)
class SwissConfig:
    eta: float = 0.995
    n_pilots: int = 128
    pilot_energy: float = 1.0
    modulation: str = "bpsk"
    n_subcarriers: int = 512
    n_ofdm_symbols: int = 2
    newton_init: float = 1.0
    newton_iters: int = 10
    newton_tol: float = 0.001
    power_budget: float | None = None   # None -> generous per-observation guard
    l_max: int = 128                    # tap-grid length of the reconstruction

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")
        if self.n_pilots > self.n_subcarriers:
            raise ValueError("more pilots than subcarriers")
        if self.n_subcarriers % self.n_pilots != 0:
            raise ValueError("pilots must divide the subcarrier grid evenly")
        if self.l_max > self.n_pilots:
            raise ValueError("l_max above n_pilots makes F^H F singular")
        if self.modulation.lower() != "bpsk":
            raise ValueError(f"unsupported pilot modulation {self.modulation!r}")


@dataclass(frozen=True)
class SwissResult:
    weights: np.ndarray            # nonnegative, sums to 1
    dual_variable: float
    identified_paths: int
    reconstruction_error: float
    newton_iterations: int
    newton_converged: bool


@dataclass(frozen=True)
class WeightSolve:
    """Output of the constrained reconstruction."""

    coefficients: np.ndarray
    dual_variable: float
    iterations: int
    converged: bool
    constraint_gap: float          # g(lambda) at the returned dual


def pilot_bins(cfg: SwissConfig) -> np.ndarray:
    """Equispaced pilot subcarrier indices."""
    spacing = cfg.n_subcarriers // cfg.n_pilots
    return np.arange(cfg.n_pilots) * spacing


def build_pilot_frame(cfg: SwissConfig, seed) -> np.ndarray:
    """BPSK pilot symbols, (n_ofdm_symbols x n_pilots), +-sqrt(pilot_energy)."""
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(cfg.n_ofdm_symbols, cfg.n_pilots)) * 2 - 1
    return signs * np.sqrt(cfg.pilot_energy) + 0j


def pilot_channel_estimate(cir: np.ndarray, frame: np.ndarray, cfg: SwissConfig) -> np.ndarray:
    """Per-pilot frequency response, averaged over the OFDM symbols.

    Noise-free: each received pilot is X_k * H_k, so R_k / X_k is exact and
    the symbol average changes nothing.
    """
    cir = np.asarray(cir, dtype=np.complex128)
    if cir.size > cfg.n_subcarriers:
        raise ValueError(
            f"impulse response length {cir.size} exceeds {cfg.n_subcarriers} subcarriers"
        )
    response = np.fft.fft(cir, cfg.n_subcarriers)[pilot_bins(cfg)]
    received = frame * response
    return (received / frame).mean(axis=0)


def pilot_dft_matrix(cfg: SwissConfig) -> np.ndarray:
    """Partial DFT dictionary F: (n_pilots x l_max), F[k, l] = e^{-2pi j b_k l / N}."""
    bins = pilot_bins(cfg)
    l_idx = np.arange(cfg.l_max)
    return np.exp(-2j * np.pi * np.outer(bins, l_idx) / cfg.n_subcarriers)


def default_power_budget(h_hat: np.ndarray, cfg: SwissConfig) -> float:
    """Generous guard budget ||H_hat||^2 / n_pilots * l_max."""
    return float(np.linalg.norm(h_hat) ** 2 / cfg.n_pilots * cfg.l_max)


def solve_weights(h_hat: np.ndarray, cfg: SwissConfig, dictionary: np.ndarray | None = None) -> WeightSolve:
    """Ridge-constrained least squares with a Newton search for the dual.

    c(lambda) = (F^H F + lambda I)^{-1} F^H H_hat; lambda solves
    g(lambda) = ||c(lambda)||^2 - power_budget = 0 when the unconstrained
    solution violates the budget, otherwise lambda = 0. Newton starts at
    newton_init, runs at most newton_iters steps, stops once
    |g| < newton_tol; negative iterates are projected back to 0. If the
    iteration budget runs out the last iterate is returned with
    converged=False.
    """
    h_hat = np.asarray(h_hat, dtype=np.complex128)
    F = pilot_dft_matrix(cfg) if dictionary is None else np.asarray(dictionary)
    budget = cfg.power_budget if cfg.power_budget is not None else default_power_budget(h_hat, cfg)

    gram = F.conj().T @ F
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = np.maximum(eigvals, 0.0)
    z = eigvecs.conj().T @ (F.conj().T @ h_hat)
    z_sq = np.abs(z) ** 2

    tiny = max(eigvals.max(), 1.0) * 1e-12

    def coefficients(lam: float) -> np.ndarray:
        denom = eigvals + lam
        scale = np.where(denom > tiny, 1.0 / np.maximum(denom, tiny), 0.0)
        return eigvecs @ (z * scale)

    def norm_sq(lam: float) -> float:
        denom = eigvals + lam
        terms = np.where(denom > tiny, z_sq / np.maximum(denom, tiny) ** 2, 0.0)
        return float(terms.sum())

    def norm_sq_deriv(lam: float) -> float:
        denom = eigvals + lam
        terms = np.where(denom > tiny, z_sq / np.maximum(denom, tiny) ** 3, 0.0)
        return float(-2.0 * terms.sum())

    if norm_sq(0.0) <= budget:
        c = coefficients(0.0)
        gap = norm_sq(0.0) - budget
        return WeightSolve(c, 0.0, 0, True, gap)

    lam = float(cfg.newton_init)
    iterations = 0
    g = norm_sq(lam) - budget
    while abs(g) >= cfg.newton_tol and iterations < cfg.newton_iters:
        slope = norm_sq_deriv(lam)
        if slope == 0.0:
            break
        lam = max(lam - g / slope, 0.0)
        g = norm_sq(lam) - budget
        iterations += 1
    converged = abs(g) < cfg.newton_tol
    return WeightSolve(coefficients(lam), lam, iterations, converged, g)


def count_significant(weights: np.ndarray, eta: float) -> int:
    """Smallest k whose k largest weights sum to at least eta.

    A 1e-12 slack keeps exact-boundary sums (e.g. 0.6 + 0.3 vs 0.9) from
    flipping on float rounding.
    """
    shares = np.sort(weights)[::-1]
    cumulative = np.cumsum(shares)
    return int(np.searchsorted(cumulative, eta - 1e-12) + 1)


def swiss_identify(cir: np.ndarray, cfg: SwissConfig | None = None, seed=0) -> SwissResult:
    """Identify the path count of an impulse response from its pilot response.

    Raises ZeroEnergyError on an all-zero observation.
    """
    cfg = cfg or SwissConfig()
    cir = np.asarray(cir, dtype=np.complex128)
    if not np.any(cir):
        raise ZeroEnergyError("observation carries no energy")
    frame = build_pilot_frame(cfg, seed)
    h_hat = pilot_channel_estimate(cir, frame, cfg)
    return identify_from_response(h_hat, cfg)


def identify_from_response(h_hat: np.ndarray, cfg: SwissConfig | None = None) -> SwissResult:
    """Run the reconstruction + threshold count on a per-pilot response."""
    cfg = cfg or SwissConfig()
    h_hat = np.asarray(h_hat, dtype=np.complex128)
    if not np.any(h_hat):
        raise ZeroEnergyError("pilot response carries no energy")
    solve = solve_weights(h_hat, cfg)
    energies = np.abs(solve.coefficients) ** 2
    total = energies.sum()
    if total == 0:
        raise ZeroEnergyError("reconstructed tap vector carries no energy")
    weights = energies / total
    F = pilot_dft_matrix(cfg)
    error = float(np.linalg.norm(h_hat - F @ solve.coefficients))
    return SwissResult(
        weights=weights,
        dual_variable=solve.dual_variable,
        identified_paths=count_significant(weights, cfg.eta),
        reconstruction_error=error,
        newton_iterations=solve.iterations,
        newton_converged=solve.converged,
    )
