"""Gradient-tracking optimization loops over a gossip network.

All methods share one skeleton: every node averages a local stochastic
mini-batch, a tracking variable accumulates the batch-average increments
through accelerated gossip, and the iterates take a tracked gradient step
followed by another gossip pass. The variance-reduced variant replaces most
large batches with recursive correction steps on correlated sample pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from decopt.allocation import theorem1_batches, theorem3_schedule
from decopt.consensus import consensus_error, fastmix
from decopt.topology import MixingMatrix

# Iteration-count guard for schedules driven to absurd accuracy targets.
MAX_ITERATIONS = 100_000_000


@dataclass
class DnssConfig:
    """Tracking-method schedule: step size, per-node batches, iteration count,
    and gossip rounds for the first (``R0``) and later (``Rt``) iterations."""

    eta: float
    batches: np.ndarray
    T: int
    R0: int
    Rt: int

    def validate(self, m: int) -> None:
        b = np.asarray(self.batches)
        if self.eta <= 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if b.shape != (m,) or b.min() < 1:
            raise ValueError("need one batch size >= 1 per node")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.R0 < 0 or self.Rt < 0:
            raise ValueError("gossip round counts must be >= 0")


@dataclass
class DnssVrConfig:
    """Variance-reduced schedule: large batches ``batches`` (used at start and
    on restarts drawn with probability ``p``), inner pair batch ``b``, and
    per-node recursive update probability ``q``."""

    eta: float
    batches: np.ndarray
    b: int
    q: float
    p: float
    T: int
    R0: int
    Rt: int

    def validate(self, m: int) -> None:
        bt = np.asarray(self.batches)
        if self.eta <= 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if bt.shape != (m,) or bt.min() < 1:
            raise ValueError("need one batch size >= 1 per node")
        if self.b < 1:
            raise ValueError(f"inner batch must be >= 1, got {self.b}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must be in (0, 1], got {self.q}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must be in (0, 1], got {self.p}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.R0 < 0 or self.Rt < 0:
            raise ValueError("gossip round counts must be >= 0")


@dataclass
class RunRecord:
    """Per-iteration metrics of one seeded run.

    ``rows`` holds ``(iter, samples, comm_rounds, grad_norm_sq,
    consensus_err, f_value)`` tuples; ``samples``/``comm_rounds`` are
    cumulative oracle-counter and gossip-round totals at the time the row was
    logged. ``output_grad_norm_sq`` is the squared gradient norm at an iterate
    drawn uniformly from the logged network averages.
    """

    seed: int
    rows: list = field(default_factory=list)
    output_grad_norm_sq: float = math.nan
    truncated: bool = False
    fingerprint: str = ""
    detail: dict = field(default_factory=dict)

    COLUMNS = ("iter", "samples", "comm_rounds", "grad_norm_sq",
               "consensus_err", "f_value")

    def column(self, name: str) -> np.ndarray:
        return np.array([row[self.COLUMNS.index(name)] for row in self.rows])


def _streams(seed: int, m: int):
    """Independent generator streams: one shared, one for output selection,
    one per node (schedule-independent across methods)."""
    ss = np.random.SeedSequence(seed)
    shared, output, *nodes = ss.spawn(m + 2)
    return (np.random.default_rng(shared), np.random.default_rng(output),
            [np.random.default_rng(s) for s in nodes])


def _log_row(rec, suite, t, comm, X):
    xbar = X.mean(axis=0)
    g = suite.global_grad(xbar)
    rec.rows.append((t, int(suite.counters.sum()), comm,
                     float(np.sum(g * g)), consensus_error(X),
                     suite.global_value(xbar)))


def dnss_run(suite, mix: MixingMatrix, cfg: DnssConfig, seed: int,
             x0=None, max_samples=None, probe=None) -> RunRecord:
    """Run the tracking method with fixed per-node batch sizes.

    Every iteration costs ``sum(batches)`` samples and ``2 * R`` gossip
    rounds (``R0`` on the first iteration, ``Rt`` after). The run stops early
    with ``truncated=True`` when the next iteration would push the oracle
    counters past ``max_samples``. ``probe(t, X, Y, S)``, when given, is
    called after every iteration.
    """
    cfg.validate(suite.m)
    m, d = suite.m, suite.dim
    _, out_rng, node_rngs = _streams(seed, m)
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    X = np.tile(x0, (m, 1))
    Y_prev = np.zeros((m, d))
    S = np.zeros((m, d))
    comm = 0
    rec = RunRecord(seed=seed)
    out_x = X.mean(axis=0).copy()
    _log_row(rec, suite, 0, comm, X)
    batches = np.asarray(cfg.batches, dtype=np.int64)
    per_iter = int(batches.sum())
    for t in range(cfg.T):
        if max_samples is not None and suite.counters.sum() + per_iter > max_samples:
            rec.truncated = True
            break
        Y = np.empty((m, d))
        for i in range(m):
            Y[i] = suite.sample_batch(i, X[i], int(batches[i]), node_rngs[i])
        R = cfg.R0 if t == 0 else cfg.Rt
        S = fastmix(S + Y - Y_prev, mix, R)
        X = fastmix(X - cfg.eta * S, mix, R)
        comm += 2 * R
        Y_prev = Y
        if probe is not None:
            probe(t, X, Y, S)
        # Reservoir step: keep each network average with probability 1/(t+2),
        # giving a uniform draw over all logged averages.
        if out_rng.random() < 1.0 / (t + 2):
            out_x = X.mean(axis=0).copy()
        _log_row(rec, suite, t + 1, comm, X)
    g = suite.global_grad(out_x)
    rec.output_grad_norm_sq = float(np.sum(g * g))
    return rec


def dnss_vr_run(suite, mix: MixingMatrix, cfg: DnssVrConfig, seed: int,
                x0=None, max_samples=None, probe=None) -> RunRecord:
    """Run the variance-reduced tracking method.

    Iteration 0 always takes the large batches. Each later iteration draws
    one shared restart coin (probability ``p``): on success every node takes
    its large batch again; otherwise each node flips its own coin
    (probability ``q``) and either corrects its batch average with ``b``
    correlated sample pairs shared between the current and previous iterate
    (2b samples) or keeps it unchanged (0 samples).
    """
    cfg.validate(suite.m)
    m, d = suite.m, suite.dim
    shared_rng, out_rng, node_rngs = _streams(seed, m)
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    X = np.tile(x0, (m, 1))
    comm = 0
    rec = RunRecord(seed=seed)
    rec.detail = {"restart_iters": 0, "pair_draws": 0}
    out_x = X.mean(axis=0).copy()
    _log_row(rec, suite, 0, comm, X)
    batches = np.asarray(cfg.batches, dtype=np.int64)
    full_cost = int(batches.sum())
    if max_samples is not None and suite.counters.sum() + full_cost > max_samples:
        rec.truncated = True
        g = suite.global_grad(out_x)
        rec.output_grad_norm_sq = float(np.sum(g * g))
        return rec
    Y = np.empty((m, d))
    for i in range(m):
        Y[i] = suite.sample_batch(i, X[i], int(batches[i]), node_rngs[i])
    S = fastmix(Y, mix, cfg.R0)
    X_prev = X
    X = fastmix(X - cfg.eta * S, mix, cfg.R0)
    comm += 2 * cfg.R0
    if probe is not None:
        probe(0, X, Y, S)
    if out_rng.random() < 0.5:
        out_x = X.mean(axis=0).copy()
    _log_row(rec, suite, 1, comm, X)
    for t in range(1, cfg.T):
        restart = shared_rng.random() < cfg.p
        if restart:
            if max_samples is not None and suite.counters.sum() + full_cost > max_samples:
                rec.truncated = True
                break
            rec.detail["restart_iters"] += 1
            Y_new = np.empty((m, d))
            for i in range(m):
                Y_new[i] = suite.sample_batch(i, X[i], int(batches[i]), node_rngs[i])
        else:
            flips = [node_rngs[i].random() < cfg.q for i in range(m)]
            cost = 2 * cfg.b * sum(flips)
            if max_samples is not None and suite.counters.sum() + cost > max_samples:
                rec.truncated = True
                break
            Y_new = Y.copy()
            for i in range(m):
                if not flips[i]:
                    continue
                corr = np.zeros(d)
                for _ in range(cfg.b):
                    g_cur, g_old = suite.sample_pair(i, X[i], X_prev[i], node_rngs[i])
                    corr += g_cur - g_old
                Y_new[i] = Y[i] + corr / (cfg.b * cfg.q)
                rec.detail["pair_draws"] += cfg.b
        S = fastmix(S + Y_new - Y, mix, cfg.Rt)
        X_prev = X
        X = fastmix(X - cfg.eta * S, mix, cfg.Rt)
        comm += 2 * cfg.Rt
        Y = Y_new
        if probe is not None:
            probe(t, X, Y, S)
        if out_rng.random() < 1.0 / (t + 2):
            out_x = X.mean(axis=0).copy()
        _log_row(rec, suite, t + 1, comm, X)
    g = suite.global_grad(out_x)
    rec.output_grad_norm_sq = float(np.sum(g * g))
    return rec


def gt_sa_run(suite, mix, cfg, seed, **kwargs) -> RunRecord:
    """Tracking skeleton under an externally chosen equal-batch schedule
    (quadratic-mean baseline); identical loop to :func:`dnss_run`."""
    return dnss_run(suite, mix, cfg, seed, **kwargs)


def dsgt_run(suite, mix, eta, batch, T, seed, **kwargs) -> RunRecord:
    """Plain stochastic gradient tracking: one gossip round per exchange and
    one uniform batch size everywhere."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    cfg = DnssConfig(eta=eta, batches=np.full(suite.m, int(batch), dtype=np.int64),
                     T=int(T), R0=1, Rt=1)
    return dnss_run(suite, mix, cfg, seed, **kwargs)


def _round_coef(chi: float, rounds_scale: float) -> float:
    if not 0.0 < chi <= 1.0:
        raise ValueError(f"chi must be in (0, 1], got {chi}")
    if rounds_scale <= 0.0:
        raise ValueError(f"rounds_scale must be > 0, got {rounds_scale}")
    return rounds_scale * (2.0 + math.sqrt(2.0)) / (2.0 * math.sqrt(chi))


def _y0_sum_sq(y0_norms, m: int) -> float:
    if y0_norms is None:
        return 0.0
    arr = np.asarray(y0_norms, dtype=float)
    if arr.ndim == 0:
        arr = np.full(m, float(arr))
    if arr.shape != (m,) or arr.min() < 0.0:
        raise ValueError("need one nonnegative initial-estimate norm per node")
    return float(np.sum(arr**2))


def theorem1_config(delta, L, sigmas, eps, chi, y0_norms=None,
                    rounds_scale: float = 1.0) -> DnssConfig:
    """Accuracy-targeted schedule for the tracking method.

    ``eta = 1/(2L)``, batches from :func:`theorem1_batches`,
    ``T = ceil(32 delta L / eps^2)``, and gossip rounds
    ``Rt = ceil(coef * log(14 max(9 m^4, 70 m^2, 6 m^3)))``,
    ``R0 = ceil(coef * log(1 + 448 m L^2 eta^2 sum_i ||y_i^0||^2 / (T eps^2)))``
    with ``coef = rounds_scale * (2 + sqrt(2)) / (2 sqrt(chi))``.
    """
    if delta <= 0.0 or L <= 0.0:
        raise ValueError("delta and L must be > 0")
    plan = theorem1_batches(sigmas, eps)
    m = plan.batches.size
    eta = 1.0 / (2.0 * L)
    T = int(math.ceil(32.0 * delta * L / eps**2))
    if T > MAX_ITERATIONS:
        raise ValueError(f"schedule needs {T} iterations (cap {MAX_ITERATIONS})")
    coef = _round_coef(chi, rounds_scale)
    Rt = int(math.ceil(coef * math.log(14.0 * max(9 * m**4, 70 * m**2, 6 * m**3))))
    y0 = _y0_sum_sq(y0_norms, m)
    R0 = int(math.ceil(coef * math.log1p(448.0 * m * L**2 * eta**2 * y0 / (T * eps**2))))
    return DnssConfig(eta=eta, batches=plan.batches, T=T, R0=R0, Rt=Rt)


def theorem3_config(delta, L, sigmas, eps, chi, y0_norms=None,
                    rounds_scale: float = 1.0,
                    batch_constant: float = 32.0) -> DnssVrConfig:
    """Accuracy-targeted schedule for the variance-reduced method.

    ``eta = 1/(48 L)``, sampling schedule from :func:`theorem3_schedule`,
    ``T = ceil(384 delta L / eps^2 + 2/p)``, and gossip rounds
    ``Rt = ceil(coef * log(1344 c m^2))`` with ``c = max(1/(b q), 1)``,
    ``R0 = ceil(coef * log(1 + 16 m sum_i ||y_i^0||^2 / (T eps^2)))``.
    ``batch_constant`` scales the large batches (default 32).
    """
    if delta <= 0.0 or L <= 0.0:
        raise ValueError("delta and L must be > 0")
    sched = theorem3_schedule(sigmas, eps, batch_constant=batch_constant)
    m = sched.batches.size
    eta = 1.0 / (48.0 * L)
    T = int(math.ceil(384.0 * delta * L / eps**2 + 2.0 / sched.p))
    if T > MAX_ITERATIONS:
        raise ValueError(f"schedule needs {T} iterations (cap {MAX_ITERATIONS})")
    coef = _round_coef(chi, rounds_scale)
    c = max(1.0 / (sched.b * sched.q), 1.0)
    Rt = int(math.ceil(coef * math.log(1344.0 * c * m**2)))
    y0 = _y0_sum_sq(y0_norms, m)
    R0 = int(math.ceil(coef * math.log1p(16.0 * m * y0 / (T * eps**2))))
    return DnssVrConfig(eta=eta, batches=sched.batches, b=sched.b, q=sched.q,
                        p=sched.p, T=T, R0=R0, Rt=Rt)
