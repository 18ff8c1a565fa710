"""Communication graphs and gossip mixing matrices.

Builds ring/path/complete/Erdos-Renyi topologies, assigns Metropolis-Hastings
weights, and computes the spectral quantities (second-largest eigenvalue
``lambda2`` and spectral gap ``chi = 1 - lambda2``) that drive the accelerated
consensus round counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Retry budget for sampling a connected Erdos-Renyi graph.
ER_RETRY_BUDGET = 1000
# Bisection budget for calibrating an edge probability to a target gap.
CALIBRATION_BUDGET = 60


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph on nodes ``0..m-1``.

    Edges are canonical ``(i, j)`` tuples with ``i < j``; construction fails
    for out-of-range endpoints, self-loops, or a disconnected edge set.
    """

    m: int
    edges: frozenset

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"node count must be >= 1, got {self.m}")
        for i, j in self.edges:
            if not (0 <= i < j < self.m):
                raise ValueError(f"invalid edge ({i}, {j}) for m={self.m}")
        if not _connected(self.m, self.edges):
            raise ValueError("graph is not connected")

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.m, self.m))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Symmetric doubly stochastic gossip matrix with cached spectral data."""

    W: np.ndarray
    lambda2: float
    chi: float


def _connected(m: int, edges) -> bool:
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(m)}) == 1


def build_graph(kind: str, m: int, edge_prob: float | None = None,
                seed: int | None = None) -> Graph:
    """Build a named topology on ``m`` nodes.

    ``kind`` is one of ``ring``, ``path``, ``complete``, ``erdos_renyi``.
    The random kind samples edges independently with ``edge_prob`` and retries
    up to ``ER_RETRY_BUDGET`` times until the result is connected.
    """
    if m < 1:
        raise ValueError(f"node count must be >= 1, got {m}")
    if kind == "ring":
        edges = {(i, i + 1) for i in range(m - 1)}
        if m > 2:
            edges.add((0, m - 1))
        return Graph(m, frozenset(edges))
    if kind == "path":
        return Graph(m, frozenset((i, i + 1) for i in range(m - 1)))
    if kind == "complete":
        return Graph(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))
    if kind == "erdos_renyi":
        if edge_prob is None or not 0.0 < edge_prob <= 1.0:
            raise ValueError(f"edge_prob must be in (0, 1], got {edge_prob}")
        rng = np.random.default_rng(seed)
        pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
        for _ in range(ER_RETRY_BUDGET):
            mask = rng.random(len(pairs)) < edge_prob
            edges = {p for p, keep in zip(pairs, mask) if keep}
            if _connected(m, edges):
                return Graph(m, frozenset(edges))
        raise RuntimeError(
            f"no connected graph found in {ER_RETRY_BUDGET} draws "
            f"(m={m}, edge_prob={edge_prob})")
    raise ValueError(f"unknown topology kind {kind!r}")


def _jacobi_eigenvalues(a: np.ndarray) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.

    Converges to off-diagonal mass below 1e-12 relative; capped at 100*n
    sweeps. Returns eigenvalues sorted ascending.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    scale = float(np.linalg.norm(a)) or 1.0
    for _ in range(100 * n):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(a.diagonal() ** 2)), 0.0))
        if off <= 1e-12 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(a[p, q])
                if abs(apq) <= 1e-36 * scale:
                    continue
                theta = (float(a[q, q]) - float(a[p, p])) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
    return np.sort(a.diagonal())


def spectral_gap(W: np.ndarray) -> tuple[float, float]:
    """Return ``(lambda2, chi)`` for a symmetric stochastic matrix.

    ``lambda2`` is the second-largest eigenvalue; ``chi = 1 - lambda2``.
    For a 1x1 matrix there is no second eigenvalue and ``(0, 1)`` is returned.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {W.shape}")
    if not np.allclose(W, W.T, atol=1e-10):
        raise ValueError("matrix is not symmetric")
    if W.shape[0] == 1:
        return 0.0, 1.0
    eigs = _jacobi_eigenvalues(W)
    lam2 = float(eigs[-2])
    return lam2, 1.0 - lam2


def metropolis_weights(g: Graph) -> MixingMatrix:
    """Metropolis-Hastings weights: ``W_ij = 1/(1 + max(deg_i, deg_j))`` on
    edges, diagonal filled so each row sums to one."""
    deg = g.degrees
    W = np.zeros((g.m, g.m))
    for i, j in g.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = W[j, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    lam2, chi = spectral_gap(W)
    return MixingMatrix(W=W, lambda2=lam2, chi=chi)


def validate_mixing(W: np.ndarray, atol: float = 1e-10) -> list[str]:
    """Check the gossip-matrix assumptions; return a list of violations.

    Checks symmetry, nonnegativity, double stochasticity, eigenvalues in
    ``[0, 1]`` (within ``atol``), and simplicity of the eigenvalue 1.
    An empty list means the matrix is admissible.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {W.shape}")
    violations = []
    if not np.allclose(W, W.T, atol=1e-12):
        violations.append("matrix is not symmetric")
    if W.min() < -1e-12:
        i, j = np.unravel_index(np.argmin(W), W.shape)
        violations.append(f"negative entry at ({i}, {j})")
    if np.abs(W.sum(axis=1) - 1.0).max() > 1e-12:
        violations.append("row sums differ from 1")
    if np.abs(W.sum(axis=0) - 1.0).max() > 1e-12:
        violations.append("column sums differ from 1")
    eigs = _jacobi_eigenvalues(0.5 * (W + W.T))
    if eigs[0] < -atol:
        violations.append(f"eigenvalue {eigs[0]:.6g} below 0 (matrix not PSD)")
    if eigs[-1] > 1.0 + atol:
        violations.append(f"eigenvalue {eigs[-1]:.6g} above 1")
    if len(eigs) >= 2 and eigs[-1] >= 1.0 - atol and eigs[-2] >= 1.0 - atol:
        violations.append("eigenvalue 1 is not simple")
    return violations


def calibrate_random_graph(m: int, target_chi: float, tol: float,
                           seed: int | None = None,
                           max_iters: int = CALIBRATION_BUDGET) -> Graph:
    """Bisect the Erdos-Renyi edge probability toward a target spectral gap.

    Returns the first sampled graph whose Metropolis-Hastings gap lies within
    ``tol`` of ``target_chi``; raises after ``max_iters`` probes reporting the
    closest gap achieved.
    """
    if not 0.0 < target_chi <= 1.0:
        raise ValueError(f"target_chi must be in (0, 1], got {target_chi}")
    if tol < 0.0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    base = 0 if seed is None else int(seed)
    lo, hi = 0.0, 1.0
    best_chi = math.inf
    for k in range(max_iters):
        p = 0.5 * (lo + hi)
        try:
            g = build_graph("erdos_renyi", m, edge_prob=max(p, 1e-9), seed=base + k)
        except RuntimeError:
            lo = p  # too sparse to stay connected
            continue
        chi = metropolis_weights(g).chi
        if abs(chi - target_chi) < abs(best_chi - target_chi):
            best_chi = chi
        if abs(chi - target_chi) <= tol:
            return g
        if chi < target_chi:
            lo = p
        else:
            hi = p
    raise RuntimeError(
        f"calibration budget exhausted after {max_iters} probes; "
        f"closest gap achieved {best_chi:.4f} for target {target_chi}")
