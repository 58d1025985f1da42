"""Iterative hard thresholding for sparse recovery, plus a tap-count oracle.

Solves min 0.5 * ||r - W c||^2 subject to ||c||_0 <= s by alternating a
gradient step with hard thresholding (keep the s largest-magnitude entries).
Complex dictionaries are handled through the conjugate transpose in the
gradient. The tap counter builds a convolution dictionary whose columns are
shifted copies of the transmit block, so the recovered coefficients estimate
the sampled impulse response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

DIVERGENCE_BOUND = 1e12


@dataclass(frozen=True)
class SparseProblem:
    """Observation r, dictionary W and the sparsity budget s."""

    dictionary: np.ndarray       # n x m
    observation: np.ndarray      # length n
    sparsity_budget: int

    def __post_init__(self):
        n, m = self.dictionary.shape
        if self.observation.shape != (n,):
            raise ValueError(
                f"observation length {self.observation.shape} does not match "
                f"dictionary rows {n}"
            )
        if not 1 <= self.sparsity_budget <= m:
            raise ValueError(f"sparsity budget {self.sparsity_budget} not in [1, {m}]")
        col_norms = np.linalg.norm(self.dictionary, axis=0)
        if np.any(col_norms == 0):
            raise ValueError("dictionary contains an all-zero column")


@dataclass(frozen=True)
class SparseSolution:
    coefficients: np.ndarray
    residual_norm: float
    iterations_used: int


def hard_threshold(c: np.ndarray, s: int) -> np.ndarray:
    """Keep the s largest-magnitude entries of c, zero the rest.

    Ties are broken toward the lowest index (stable sort on magnitude).
    """
    c = np.asarray(c)
    if s >= c.size:
        return c.copy()
    order = np.argsort(-np.abs(c), kind="stable")
    out = np.zeros_like(c)
    keep = order[:s]
    out[keep] = c[keep]
    return out


def spectral_step(dictionary: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """Step size 1 / ||W||_2^2 from a fixed-seed power method on W^H W."""
    rng = np.random.default_rng(seed)
    m = dictionary.shape[1]
    v = rng.standard_normal(m)
    if np.iscomplexobj(dictionary):
        v = v + 1j * rng.standard_normal(m)
    v = v / np.linalg.norm(v)
    sigma_sq = 1.0
    for _ in range(iters):
        w = dictionary.conj().T @ (dictionary @ v)
        sigma_sq = np.linalg.norm(w)
        if sigma_sq == 0:
            return 1.0
        v = w / sigma_sq
    return 1.0 / float(sigma_sq)


def iht_solve(
    p: SparseProblem,
    step: float | None = None,
    max_iters: int = 200,
    tol: float = 1e-8,
) -> SparseSolution:
    """Run IHT from c = 0: c <- H_s(c + step * W^H (r - W c)).

    Stops when the iterate change drops below tol or max_iters is reached.
    step defaults to the power-method estimate of 1 / ||W||_2^2. Raises
    DivergenceError if the iterate norm exceeds 1e12.
    """
    if step is None:
        step = spectral_step(p.dictionary)
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    W = p.dictionary
    r = p.observation
    c = np.zeros(W.shape[1], dtype=np.result_type(W.dtype, r.dtype))
    iterations = 0
    for iterations in range(1, max_iters + 1):
        residual = r - W @ c
        c_next = hard_threshold(c + step * (W.conj().T @ residual), p.sparsity_budget)
        change = np.linalg.norm(c_next - c)
        c = c_next
        if np.linalg.norm(c) > DIVERGENCE_BOUND:
            raise DivergenceError(
                f"IHT iterate norm exceeded {DIVERGENCE_BOUND:g} at iteration {iterations}"
            )
        if change < tol:
            break
    residual_norm = float(np.linalg.norm(r - W @ c))
    return SparseSolution(coefficients=c, residual_norm=residual_norm, iterations_used=iterations)


def convolution_dictionary(x: np.ndarray, k: int) -> np.ndarray:
    """(len(x) + k - 1) x k matrix whose column j is x delayed by j samples."""
    x = np.asarray(x)
    n = x.size + k - 1
    W = np.zeros((n, k), dtype=np.result_type(x.dtype, np.float64))
    for j in range(k):
        W[j : j + x.size, j] = x
    return W


def iht_count_taps(
    x: np.ndarray,
    y: np.ndarray,
    s_max: int,
    significance: float = 0.05,
    step: float | None = None,
    max_iters: int = 200,
    tol: float = 1e-9,
) -> int:
    """Count channel taps by sparse deconvolution of y against shifts of x.

    s_max is the delay-grid length: y must be the full convolution of x with
    an impulse response on an s_max grid. The solver runs at the largest
    budget (s = s_max) and the count is the number of coefficients whose
    magnitude reaches significance * max |c|. An all-zero y returns 0.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if not 0.0 < significance < 1.0:
        raise ValueError(f"significance must be in (0, 1), got {significance}")
    if y.size != x.size + s_max - 1:
        raise ValueError(
            f"expected len(y) = len(x) + s_max - 1 = {x.size + s_max - 1}, got {y.size}"
        )
    if not np.any(y):
        return 0
    W = convolution_dictionary(x, s_max)
    problem = SparseProblem(dictionary=W, observation=y, sparsity_budget=s_max)
    solution = iht_solve(problem, step=step, max_iters=max_iters, tol=tol)
    mags = np.abs(solution.coefficients)
    peak = mags.max()
    if peak == 0:
        return 0
    return int(np.count_nonzero(mags >= significance * peak))
