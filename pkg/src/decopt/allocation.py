"""Mini-batch allocation across heterogeneous nodes.

Given per-node gradient-noise levels ``sigma_i`` and a target accuracy
``eps``, the variance of the network-average gradient estimate is
``(1/m^2) * sum_i sigma_i^2 / B_i``. The cost-optimal allocation meeting the
``eps^2`` variance target sets ``B_i`` proportional to ``sigma_i``; the
baselines here ignore heterogeneity (uniform worst-case, or quadratic-mean
sized equal batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    """Per-node batch sizes with their total cost and variance bound."""

    batches: np.ndarray
    total: float
    mse_bound: float


@dataclass(frozen=True)
class MeanStats:
    """Arithmetic, quadratic, and power-2/3 means of a noise profile."""

    am: float
    qm: float
    p23: float


@dataclass(frozen=True, eq=False)
class Theorem3Schedule:
    """Variance-reduced sampling schedule: large batches ``batches``, inner
    batch ``b``, node update probability ``q``, restart probability ``p``."""

    batches: np.ndarray
    b: int
    q: float
    p: float


def _check_profile(sigmas, positive: bool = True) -> np.ndarray:
    sig = np.asarray(sigmas, dtype=float)
    if sig.ndim != 1 or sig.size < 1:
        raise ValueError("noise profile must be a non-empty 1-d array")
    if positive and sig.min() <= 0.0:
        raise ValueError("noise profile entries must be > 0")
    if not positive and sig.min() < 0.0:
        raise ValueError("noise profile entries must be >= 0")
    return sig


def _check_eps(eps: float) -> float:
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    return float(eps)


def _plan(sigmas: np.ndarray, batches: np.ndarray) -> AllocationPlan:
    return AllocationPlan(
        batches=batches,
        total=float(batches.sum()),
        mse_bound=mse_bound(sigmas, batches),
    )


def mse_bound(sigmas, batches) -> float:
    """Variance bound ``(1/m^2) * sum_i sigma_i^2 / B_i`` of the averaged
    batch-gradient estimate."""
    sig = _check_profile(sigmas, positive=False)
    b = np.asarray(batches, dtype=float)
    if b.shape != sig.shape:
        raise ValueError("batches and noise profile must have the same length")
    if b.min() <= 0.0:
        raise ValueError("batch sizes must be > 0")
    m = sig.size
    return float(np.sum(sig**2 / b) / m**2)


def optimal_batches(sigmas, eps: float) -> AllocationPlan:
    """Cost-optimal real-valued allocation ``B_i = sigma_i * sum_j sigma_j /
    (m^2 eps^2)``; total cost equals ``(mean sigma)^2 / eps^2`` and the
    variance bound is met with equality at ``eps^2``."""
    sig = _check_profile(sigmas)
    eps = _check_eps(eps)
    m = sig.size
    batches = sig * sig.sum() / (m**2 * eps**2)
    return _plan(sig, batches)


def theorem1_batches(sigmas, eps: float) -> AllocationPlan:
    """Integer allocation ``B_i = ceil(16 * sigma_i * sum_j sigma_j /
    (m^2 eps^2))`` used by the tuned tracking method."""
    sig = _check_profile(sigmas)
    eps = _check_eps(eps)
    m = sig.size
    batches = np.ceil(16.0 * sig * sig.sum() / (m**2 * eps**2)).astype(np.int64)
    return _plan(sig, batches)


def theorem3_schedule(sigmas, eps: float, batch_constant: float = 32.0) -> Theorem3Schedule:
    """Sampling schedule for the variance-reduced method.

    ``B_i = max(ceil(batch_constant * sigma_i * sum_j sigma_j / (m^2 eps^2)), 1)``,
    inner batch ``b = ceil(sqrt(sum B) / m)``, node update probability
    ``q = sqrt(sum B) / (b m)``, restart probability
    ``p = b q / (b q + sum B / m)``.
    """
    sig = _check_profile(sigmas)
    eps = _check_eps(eps)
    if batch_constant <= 0.0:
        raise ValueError(f"batch_constant must be > 0, got {batch_constant}")
    m = sig.size
    batches = np.maximum(
        np.ceil(batch_constant * sig * sig.sum() / (m**2 * eps**2)), 1.0
    ).astype(np.int64)
    total = float(batches.sum())
    b = int(math.ceil(math.sqrt(total) / m))
    q = math.sqrt(total) / (b * m)
    p = b * q / (b * q + total / m)
    return Theorem3Schedule(batches=batches, b=b, q=q, p=p)


def uniform_batches(sigmas, eps: float) -> AllocationPlan:
    """Worst-case equal allocation ``B_i = ceil(max_j sigma_j^2 / (m eps^2))``."""
    sig = _check_profile(sigmas, positive=False)
    eps = _check_eps(eps)
    m = sig.size
    size = max(int(math.ceil(float(sig.max()) ** 2 / (m * eps**2))), 1)
    return _plan(sig, np.full(m, size, dtype=np.int64))


def qm_batches(sigmas, eps: float) -> AllocationPlan:
    """Quadratic-mean equal allocation ``B_i = ceil(mean_j sigma_j^2 /
    (m eps^2))``."""
    sig = _check_profile(sigmas, positive=False)
    eps = _check_eps(eps)
    m = sig.size
    size = max(int(math.ceil(float(np.mean(sig**2)) / (m * eps**2))), 1)
    return _plan(sig, np.full(m, size, dtype=np.int64))


def mean_stats(sigmas) -> MeanStats:
    """Arithmetic mean, quadratic mean, and power-2/3 mean
    ``(mean sigma^(2/3))^(3/2)`` of the profile."""
    sig = _check_profile(sigmas, positive=False)
    return MeanStats(
        am=float(np.mean(sig)),
        qm=float(math.sqrt(np.mean(sig**2))),
        p23=float(np.mean(sig ** (2.0 / 3.0)) ** 1.5),
    )


def estimate_sigmas(suite, x0, n_pilot: int, rng) -> np.ndarray:
    """Estimate per-node noise levels from ``n_pilot`` stochastic gradients.

    Uses the norm-based sample variance around the per-node pilot mean,
    ``sigma_i^2 ~= sum_j ||g_j - g_bar||^2 / (n_pilot - 1)``; the draws are
    charged to the oracle sample counters.
    """
    if n_pilot < 2:
        raise ValueError(f"n_pilot must be >= 2, got {n_pilot}")
    rng = np.random.default_rng(rng)
    x0 = np.asarray(x0, dtype=float)
    out = np.empty(suite.m)
    for i in range(suite.m):
        grads = np.stack([suite.sample(i, x0, rng) for _ in range(n_pilot)])
        centered = grads - grads.mean(axis=0)
        out[i] = math.sqrt(float(np.sum(centered**2)) / (n_pilot - 1))
    return out
