"""Accelerated gossip averaging (Chebyshev-weighted mixing).

Each round multiplies the node-state matrix by the gossip matrix with a
momentum correction; ``R`` rounds shrink the consensus error by the factor
``sqrt(14) * (1 - (1 - 1/sqrt(2)) * sqrt(chi))**R`` while preserving the
network average exactly.
"""

from __future__ import annotations

import math

import numpy as np

from decopt.topology import MixingMatrix

# Contraction-envelope constants: error after R rounds is bounded by
# C1 * (1 - C2 * sqrt(chi))**R times the initial error.
C1 = math.sqrt(14.0)
C2 = 1.0 - 1.0 / math.sqrt(2.0)


def contraction_factor(rounds: int, chi: float) -> float:
    """Worst-case consensus-error shrink factor for ``rounds`` gossip rounds."""
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    if not 0.0 < chi <= 1.0:
        raise ValueError(f"chi must be in (0, 1], got {chi}")
    return C1 * (1.0 - C2 * math.sqrt(chi)) ** rounds


def fastmix(z0: np.ndarray, mix: MixingMatrix, rounds: int) -> np.ndarray:
    """Run ``rounds`` accelerated gossip rounds on the rows of ``z0``.

    Row ``i`` of ``z0`` is node ``i``'s state. ``rounds = 0`` returns a copy
    of the input. The momentum weight depends only on ``mix.lambda2``
    (clamped to ``[0, 1]``). Uses three rotating buffers, no per-round
    allocation.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    W = mix.W
    z0 = np.asarray(z0, dtype=float)
    if z0.shape[0] != W.shape[0]:
        raise ValueError(
            f"state has {z0.shape[0]} rows but the graph has {W.shape[0]} nodes")
    lam = min(max(mix.lambda2, 0.0), 1.0)
    root = math.sqrt(max(1.0 - lam * lam, 0.0))
    eta = (1.0 - root) / (1.0 + root)
    prev = z0.copy()
    cur = z0.copy()
    out = np.empty_like(cur)
    for _ in range(rounds):
        np.matmul(W, cur, out=out)
        out *= 1.0 + eta
        prev *= eta
        out -= prev
        prev, cur, out = cur, out, prev
    return cur


def consensus_error(z: np.ndarray) -> float:
    """Frobenius distance from ``z`` to the matrix of its row average."""
    z = np.asarray(z, dtype=float)
    return float(np.linalg.norm(z - z.mean(axis=0)))


def rounds_for_target(chi: float, target_rho: float) -> int:
    """Smallest round count whose contraction factor is at most ``target_rho``.

    Returns 0 when ``target_rho >= sqrt(14)`` (the envelope at zero rounds).
    """
    if not 0.0 < chi <= 1.0:
        raise ValueError(f"chi must be in (0, 1], got {chi}")
    if target_rho <= 0.0:
        raise ValueError(f"target_rho must be > 0, got {target_rho}")
    if target_rho >= C1:
        return 0
    base = 1.0 - C2 * math.sqrt(chi)
    r = max(int(math.ceil(math.log(target_rho / C1) / math.log(base))), 0)
    # Guard the ceiling against floating-point edge cases on both sides.
    while r > 0 and contraction_factor(r - 1, chi) <= target_rho:
        r -= 1
    while contraction_factor(r, chi) > target_rho:
        r += 1
    return r
