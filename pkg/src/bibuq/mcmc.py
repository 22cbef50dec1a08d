"""Adaptive random-walk Metropolis and convergence diagnostics.

The sampler is deliberately small: a joint Gaussian proposal with a
diagonal covariance whose per-coordinate scales are learned from the
warmup draws and whose global step size is tuned toward a target
acceptance rate.  Adaptation stops when warmup ends, so the kept draws
come from a fixed-kernel chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["ChainResult", "run_chain", "split_rhat", "effective_sample_size"]


@dataclass(frozen=True)
class ChainResult:
    """Kept draws of one chain plus its post-warmup acceptance rate."""

    draws: np.ndarray  # (keep, dim)
    acceptance_rate: float


def run_chain(
    log_density: Callable[[np.ndarray], float],
    initial: np.ndarray,
    *,
    warmup: int,
    keep: int,
    rng: np.random.Generator,
    target_acceptance: float = 0.3,
    initial_scale: float = 0.1,
) -> ChainResult:
    """Run one adaptive Metropolis chain.

    During warmup the global proposal scale follows a Robbins-Monro
    recursion on the acceptance probability and the per-coordinate scales
    track the running standard deviation of the chain.  Both are frozen
    afterwards; only post-warmup draws are returned.
    """
    x = np.asarray(initial, dtype=np.float64).copy()
    dim = x.size
    lp = float(log_density(x))
    if not np.isfinite(lp):
        raise ValueError("initial state has non-finite log density")

    log_scale = np.log(initial_scale * 2.38 / np.sqrt(dim))
    # Welford accumulators for the warmup sample variance.
    mean = x.copy()
    m2 = np.zeros(dim)
    count = 1
    coord_sd = np.ones(dim)

    draws = np.empty((keep, dim))
    accepted = 0

    for step in range(warmup + keep):
        adapting = step < warmup
        proposal = x + np.exp(log_scale) * coord_sd * rng.standard_normal(dim)
        lp_prop = float(log_density(proposal))
        log_alpha = lp_prop - lp
        accept_prob = 1.0 if log_alpha >= 0 else np.exp(log_alpha)
        if rng.random() < accept_prob:
            x = proposal
            lp = lp_prop
            if not adapting:
                accepted += 1

        if adapting:
            gamma = (step + 1) ** -0.6
            log_scale += gamma * (accept_prob - target_acceptance)
            count += 1
            delta = x - mean
            mean += delta / count
            m2 += delta * (x - mean)
            if count > 10:
                coord_sd = np.sqrt(m2 / (count - 1) + 1e-12)
        else:
            draws[step - warmup] = x

    return ChainResult(draws=draws, acceptance_rate=accepted / keep)


def split_rhat(chains: np.ndarray) -> float:
    """Split potential scale reduction factor for one scalar quantity.

    ``chains`` has shape (m, n): m chains of n draws each.  Each chain is
    split in half, giving 2m sequences; the statistic compares
    between-sequence and within-sequence variance.  Returns inf when the
    within variance is zero but the sequence means differ, and 1.0 for
    completely constant input.
    """
    chains = np.asarray(chains, dtype=np.float64)
    if chains.ndim != 2:
        raise ValueError("chains must be 2-d (chains, draws)")
    m, n = chains.shape
    if n < 4:
        raise ValueError("need at least 4 draws per chain to split")
    half = n // 2
    split = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    within = split.var(axis=1, ddof=1).mean()
    between = half * split.mean(axis=1).var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_hat = (half - 1) / half * within + between / half
    return float(np.sqrt(var_hat / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of a 1-d series via FFT, all lags."""
    n = x.size
    centered = x - x.mean()
    size = int(2 ** np.ceil(np.log2(2 * n)))
    fft = np.fft.rfft(centered, size)
    acov = np.fft.irfft(fft * np.conj(fft), size)[:n].real
    return acov / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Effective sample size from combined-chain autocorrelations.

    Uses the multi-chain estimator with Geyer's initial monotone positive
    sequence truncation.  Returns m*n (no correction) for a series with
    zero variance.
    """
    chains = np.asarray(chains, dtype=np.float64)
    if chains.ndim == 1:
        chains = chains[None, :]
    m, n = chains.shape
    total = m * n
    chain_var = chains.var(axis=1, ddof=1)
    within = chain_var.mean()
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus == 0.0:
        return float(total)

    acov = np.stack([_autocovariance(chains[i]) for i in range(m)])
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Geyer: accumulate even/odd lag pairs while the pair sums stay
    # positive, forcing them non-increasing.
    tau = -1.0
    prev_pair = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        tau += 2.0 * pair
        prev_pair = pair
        t += 2
    if tau <= 0.0:
        return float(total)
    ess = total / tau
    return float(min(ess, total))
