"""Per-node stochastic first-order oracles.

Three problem families share one interface: noisy quadratics, regularized
logistic regression over data shards, and a coordinate-chain construction
whose stochastic gradient reveals at most one new coordinate per lucky draw
(used to exhibit sample-complexity lower bounds).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, expit

# Coordinate-chain constants: per-coordinate value gap, gradient Lipschitz
# bound, and the scale entering the estimator variance bound a^2 (1-p)/p.
CHAIN_VALUE_GAP = 12.0
CHAIN_LIPSCHITZ = 152.0
CHAIN_NOISE_SCALE = 23.0

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


# ---------------------------------------------------------------------------
# Coordinate-chain building blocks.

def smooth_step(t):
    """Smooth switch: 0 for ``t <= 1/2``, ``exp(1 - (2t-1)^-2)`` above.

    Infinitely differentiable, equals 1 at ``t = 1`` and tends to ``e``.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mask = t > 0.5
    z = 2.0 * t[mask] - 1.0
    with np.errstate(over="ignore", under="ignore"):
        out[mask] = np.exp(1.0 - 1.0 / z**2)
    return float(out) if out.ndim == 0 else out


def smooth_step_deriv(t):
    """Derivative of :func:`smooth_step`: ``smooth_step(t) * 4 / (2t-1)^3``
    for ``t > 1/2``, 0 elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mask = t > 0.5
    z = 2.0 * t[mask] - 1.0
    with np.errstate(over="ignore", under="ignore"):
        out[mask] = np.exp(1.0 - 1.0 / z**2) * 4.0 / z**3
    return float(out) if out.ndim == 0 else out


def gaussian_integral(t):
    """Unnormalized Gaussian CDF ``int_{-inf}^t exp(-tau^2/2) dtau``,
    computed as ``sqrt(pi/2) * (1 + erf(t / sqrt(2)))``."""
    t = np.asarray(t, dtype=float)
    out = _SQRT_HALF_PI * (1.0 + erf(t / math.sqrt(2.0)))
    return float(out) if out.ndim == 0 else out


def chain_value(x) -> float:
    """Value of the coordinate-chain function on ``x`` in R^D.

    ``-step(1) * gint(x_1) + sum_{i>=2} [step(-x_{i-1}) gint(-x_i)
    - step(x_{i-1}) gint(x_i)]`` with :func:`smooth_step` and
    :func:`gaussian_integral`. Every stationary point has all coordinates
    active; an all-zero tail keeps the gradient norm above 1.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("chain input must be a non-empty 1-d array")
    val = -smooth_step(1.0) * gaussian_integral(x[0])
    if x.size > 1:
        prev, cur = x[:-1], x[1:]
        val += float(np.sum(smooth_step(-prev) * gaussian_integral(-cur)
                            - smooth_step(prev) * gaussian_integral(cur)))
    return float(val)


def chain_grad(x) -> np.ndarray:
    """Gradient of :func:`chain_value`; support never extends more than one
    coordinate past the last nonzero coordinate of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("chain input must be a non-empty 1-d array")
    g = np.zeros_like(x)
    g[0] = -smooth_step(1.0) * math.exp(-0.5 * x[0] ** 2)
    if x.size > 1:
        prev, cur = x[:-1], x[1:]
        kern = np.exp(-0.5 * cur**2)
        g[1:] += -(smooth_step(-prev) + smooth_step(prev)) * kern
        g[:-1] += -(smooth_step_deriv(-prev) * gaussian_integral(-cur)
                    + smooth_step_deriv(prev) * gaussian_integral(cur))
    return g


def last_nonzero_index(x) -> int:
    """1-based index of the last nonzero coordinate; 0 for the zero vector."""
    x = np.asarray(x, dtype=float)
    nz = np.nonzero(x)[0]
    return int(nz[-1] + 1) if nz.size else 0


def chain_grad_estimator(x, p: float, rng: np.random.Generator) -> np.ndarray:
    """Unbiased chain-gradient estimate that hides unexplored coordinates.

    Coordinates beyond the last nonzero coordinate of ``x`` are scaled by
    ``xi / p`` with ``xi ~ Bernoulli(p)``, so new coordinates become visible
    only on a success. Variance is at most ``CHAIN_NOISE_SCALE^2 (1-p)/p``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    g = chain_grad(x)
    xi = 1.0 if rng.random() < p else 0.0
    g[last_nonzero_index(x):] *= xi / p
    return g


def chain_fill_trial(dim: int, p: float, budget: int,
                     rng: np.random.Generator) -> int:
    """Greedily reveal chain coordinates with ``budget`` estimator draws.

    Each draw queries :func:`chain_grad_estimator` at the current iterate and,
    when the draw exposes the next coordinate, pins it to 1 (the fastest
    possible progress for any method that only learns coordinates through the
    estimator). Returns the final 1-based progress index.
    """
    x = np.zeros(dim)
    for _ in range(budget):
        k = last_nonzero_index(x)
        if k >= dim:
            break
        g = chain_grad_estimator(x, p, rng)
        if g[k] != 0.0:
            x[k] = 1.0
    return last_nonzero_index(x)


# ---------------------------------------------------------------------------
# Oracle suites.

class OracleSuite:
    """Per-node first-order oracles over a shared decision space.

    ``sample`` / ``sample_pair`` charge the per-node sample counters, one
    count per (draw, point) evaluation; exact local gradients are free.
    Instances are not safe to share across threads.
    """

    def __init__(self, m: int, dim: int):
        if m < 1:
            raise ValueError(f"node count must be >= 1, got {m}")
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        self.m = m
        self.dim = dim
        self.counters = np.zeros(m, dtype=np.int64)

    # Subclass hooks (uncounted).
    def local_value(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def local_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _draw(self, i: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _draw_pair(self, i, x, x_prev, rng):
        raise NotImplementedError

    def sample(self, i: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One unbiased stochastic gradient at ``x`` for node ``i``."""
        self.counters[i] += 1
        return self._draw(i, x, rng)

    def sample_batch(self, i: int, x: np.ndarray, size: int,
                     rng: np.random.Generator) -> np.ndarray:
        """Average of ``size`` independent stochastic gradients."""
        if size < 1:
            raise ValueError(f"batch size must be >= 1, got {size}")
        acc = self.sample(i, x, rng).copy()
        for _ in range(size - 1):
            acc += self.sample(i, x, rng)
        return acc / size

    def sample_pair(self, i, x, x_prev, rng):
        """Correlated pair ``(g(x; xi), g(x_prev; xi))`` sharing one draw
        ``xi``; charges two samples."""
        self.counters[i] += 2
        return self._draw_pair(i, x, x_prev, rng)

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the network-average objective."""
        g = self.local_grad(0, x).copy()
        for i in range(1, self.m):
            g += self.local_grad(i, x)
        return g / self.m

    def global_value(self, x: np.ndarray) -> float:
        return sum(self.local_value(i, x) for i in range(self.m)) / self.m


class QuadraticSuite(OracleSuite):
    """Noisy quadratics ``f_i(x) = x' A_i x / 2 - b_i' x`` with additive
    Gaussian gradient noise of total variance ``sigma_i^2`` (i.i.d.
    per-coordinate variance ``sigma_i^2 / d``). Paired draws share the noise
    vector, so pair differences are noiseless."""

    def __init__(self, mats, vecs, sigmas):
        mats = [np.asarray(a, dtype=float) for a in mats]
        vecs = [np.asarray(v, dtype=float) for v in vecs]
        if not mats or len(mats) != len(vecs):
            raise ValueError("need one matrix and one vector per node")
        d = mats[0].shape[0]
        for a in mats:
            if a.shape != (d, d) or not np.allclose(a, a.T, atol=1e-12):
                raise ValueError("quadratic matrices must be symmetric and share a shape")
        sig = np.asarray(sigmas, dtype=float)
        if sig.shape != (len(mats),) or sig.min() < 0.0:
            raise ValueError("need one nonnegative noise level per node")
        super().__init__(len(mats), d)
        self.mats = mats
        self.vecs = vecs
        self.sigmas = sig
        self.mean_mat = sum(mats) / len(mats)
        self.mean_vec = sum(vecs) / len(vecs)

    def local_value(self, i, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.mats[i] @ x - self.vecs[i] @ x)

    def local_grad(self, i, x):
        return self.mats[i] @ np.asarray(x, dtype=float) - self.vecs[i]

    def _noise(self, i, rng, size=None):
        s = self.sigmas[i]
        shape = (self.dim,) if size is None else (size, self.dim)
        if s == 0.0:
            return np.zeros(shape)
        return rng.normal(0.0, s / math.sqrt(self.dim), shape)

    def _draw(self, i, x, rng):
        return self.local_grad(i, x) + self._noise(i, rng)

    def _draw_pair(self, i, x, x_prev, rng):
        n = self._noise(i, rng)
        return self.local_grad(i, x) + n, self.local_grad(i, x_prev) + n

    def sample_batch(self, i, x, size, rng):
        if size < 1:
            raise ValueError(f"batch size must be >= 1, got {size}")
        self.counters[i] += size
        return self.local_grad(i, x) + self._noise(i, rng, size).mean(axis=0)

    def smoothness(self) -> float:
        """Largest eigenvalue of the average matrix."""
        return float(np.linalg.eigvalsh(self.mean_mat)[-1])

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.mean_mat, self.mean_vec)

    def optimality_gap(self, x0) -> float:
        """``f(x0) - min f`` of the network-average objective."""
        xs = self.minimizer()
        return self.global_value(x0) - self.global_value(xs)


def _coordinate_reg_value(x, reg):
    return reg * float(np.sum(x**2 / (1.0 + x**2)))


def _coordinate_reg_grad(x, reg):
    return 2.0 * reg * x / (1.0 + x**2) ** 2


class LogisticSuite(OracleSuite):
    """Regularized logistic regression over per-node data shards.

    ``f_i(x) = mean_j log(1 + exp(-b_ij a_ij' x)) + reg * sum_k x_k^2 / (1 + x_k^2)``.
    Stochastic gradients use one uniformly drawn local datapoint plus the
    regularizer gradient plus optional Gaussian noise of total variance
    ``sigma_i^2``; paired draws share the datapoint and the noise vector.
    """

    def __init__(self, features, labels, sigmas, reg: float = 1e-4):
        features = [np.asarray(f, dtype=float) for f in features]
        labels = [np.asarray(l, dtype=float) for l in labels]
        if not features or len(features) != len(labels):
            raise ValueError("need one feature block and one label block per node")
        d = features[0].shape[1]
        for f, l in zip(features, labels):
            if f.ndim != 2 or f.shape[1] != d:
                raise ValueError("feature blocks must share a column count")
            if l.shape != (f.shape[0],) or f.shape[0] < 1:
                raise ValueError("each node needs matching nonempty features and labels")
            if not np.all(np.abs(l) == 1.0):
                raise ValueError("labels must be +1 or -1")
        sig = np.asarray(sigmas, dtype=float)
        if sig.shape != (len(features),) or sig.min() < 0.0:
            raise ValueError("need one nonnegative noise level per node")
        if reg < 0.0:
            raise ValueError(f"reg must be >= 0, got {reg}")
        super().__init__(len(features), d)
        self.features = features
        self.labels = labels
        self.sigmas = sig
        self.reg = reg

    def local_value(self, i, x):
        x = np.asarray(x, dtype=float)
        margins = -self.labels[i] * (self.features[i] @ x)
        # log(1 + exp(z)) evaluated stably
        return float(np.mean(np.logaddexp(0.0, margins))) + _coordinate_reg_value(x, self.reg)

    def local_grad(self, i, x):
        x = np.asarray(x, dtype=float)
        A, b = self.features[i], self.labels[i]
        coefs = -b * expit(-b * (A @ x))
        return (coefs @ A) / A.shape[0] + _coordinate_reg_grad(x, self.reg)

    def _point_grad(self, i, j, x):
        a = self.features[i][j]
        b = self.labels[i][j]
        return (-b * expit(-b * float(a @ x))) * a + _coordinate_reg_grad(x, self.reg)

    def _noise(self, i, rng):
        s = self.sigmas[i]
        if s == 0.0:
            return 0.0
        return rng.normal(0.0, s / math.sqrt(self.dim), self.dim)

    def _draw(self, i, x, rng):
        x = np.asarray(x, dtype=float)
        j = int(rng.integers(self.features[i].shape[0]))
        return self._point_grad(i, j, x) + self._noise(i, rng)

    def _draw_pair(self, i, x, x_prev, rng):
        x = np.asarray(x, dtype=float)
        x_prev = np.asarray(x_prev, dtype=float)
        j = int(rng.integers(self.features[i].shape[0]))
        n = self._noise(i, rng)
        return self._point_grad(i, j, x) + n, self._point_grad(i, j, x_prev) + n

    def sample_batch(self, i, x, size, rng):
        if size < 1:
            raise ValueError(f"batch size must be >= 1, got {size}")
        x = np.asarray(x, dtype=float)
        self.counters[i] += size
        A, b = self.features[i], self.labels[i]
        idx = rng.integers(A.shape[0], size=size)
        coefs = -b[idx] * expit(-b[idx] * (A[idx] @ x))
        g = (coefs @ A[idx]) / size + _coordinate_reg_grad(x, self.reg)
        s = self.sigmas[i]
        if s > 0.0:
            g = g + rng.normal(0.0, s / math.sqrt(self.dim), (size, self.dim)).mean(axis=0)
        return g

    def smoothness_bound(self, iters: int = 200) -> float:
        """Power-iteration bound on the average loss curvature plus the
        regularizer curvature bound ``2 * reg``."""
        rng = np.random.default_rng(0)
        v = rng.normal(size=self.dim)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = np.zeros(self.dim)
            for A in self.features:
                w += A.T @ (A @ v) / (4.0 * A.shape[0])
            w /= self.m
            lam = float(v @ w)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break
            v = w / norm
        return lam + 2.0 * self.reg


class HardInstanceSuite(OracleSuite):
    """Distributed coordinate-chain construction with per-node difficulty.

    Node ``i`` owns a disjoint coordinate block of length ``D_i`` and sees a
    scaled chain function through it; the estimator success probability
    ``p_i`` and scale ``lam_i`` are set from the node noise level so the
    stochastic gradient variance is at most ``sigma_i^2`` while any method
    needs on the order of ``(D_i - 1) / (2 p_i)`` draws per node to drive the
    average gradient below ``eps``.
    """

    def __init__(self, m, L, delta, eps, sigmas, shares=None):
        if L <= 0.0 or delta <= 0.0 or eps <= 0.0:
            raise ValueError("L, delta, and eps must be > 0")
        sig = np.asarray(sigmas, dtype=float)
        if sig.shape != (m,) or sig.min() <= 0.0:
            raise ValueError("need one positive noise level per node")
        if shares is None:
            shares = np.full(m, 1.0 / m)
        shares = np.asarray(shares, dtype=float)
        if shares.shape != (m,) or shares.min() <= 0.0:
            raise ValueError("need one positive sample share per node")
        if abs(shares.sum() - 1.0) > 1e-9:
            raise ValueError("sample shares must sum to 1")
        sbar = float(sig.mean())
        ell = CHAIN_LIPSCHITZ
        a2 = CHAIN_NOISE_SCALE**2
        self.L = float(L)
        self.delta = float(delta)
        self.eps = float(eps)
        self.sigmas = sig
        self.scales = ell / (math.sqrt(m) * L) * np.sqrt(sig / sbar) * 2.0 * eps
        self.probs = 1.0 / (sig * sbar / (4.0 * m * a2 * eps**2) + 1.0)
        lengths = np.floor(
            delta * L / (4.0 * CHAIN_VALUE_GAP * ell * eps**2)
            * (sbar / sig) * m * shares).astype(np.int64)
        for i, D in enumerate(lengths):
            if D < 1:
                raise ValueError(
                    f"node {i}: chain length {D} < 1; increase delta or decrease eps")
        self.lengths = lengths
        self.offsets = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        super().__init__(m, int(lengths.sum()))

    def _block(self, i, x):
        off = self.offsets[i]
        return np.asarray(x, dtype=float)[off:off + self.lengths[i]]

    def local_value(self, i, x):
        lam = self.scales[i]
        scale = self.m * self.L * lam**2 / CHAIN_LIPSCHITZ
        return scale * chain_value(self._block(i, x) / lam)

    def _lift(self, i, block_grad):
        g = np.zeros(self.dim)
        off = self.offsets[i]
        g[off:off + self.lengths[i]] = block_grad
        return g

    def local_grad(self, i, x):
        lam = self.scales[i]
        scale = self.m * self.L * lam / CHAIN_LIPSCHITZ
        return self._lift(i, scale * chain_grad(self._block(i, x) / lam))

    def _draw(self, i, x, rng):
        lam = self.scales[i]
        scale = self.m * self.L * lam / CHAIN_LIPSCHITZ
        z = self._block(i, x) / lam
        return self._lift(i, scale * chain_grad_estimator(z, self.probs[i], rng))

    def _draw_pair(self, i, x, x_prev, rng):
        lam = self.scales[i]
        scale = self.m * self.L * lam / CHAIN_LIPSCHITZ
        p = self.probs[i]
        xi = 1.0 if rng.random() < p else 0.0

        def apply(point):
            z = self._block(i, point) / lam
            g = chain_grad(z)
            g[last_nonzero_index(z):] *= xi / p
            return self._lift(i, scale * g)

        return apply(x), apply(x_prev)

    def progress_threshold(self, i: int) -> float:
        """Draw count ``(D_i - 1) / (2 p_i)`` below which node ``i``'s chain
        stays incomplete with probability at least 1/2."""
        return (self.lengths[i] - 1) / (2.0 * self.probs[i])
