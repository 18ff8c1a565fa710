"""Experiment orchestration: config files, seeded runs, CSV records.

A TOML config describes the problem, topology, noise profile, and run
settings; unknown keys are rejected by name. Each (config, seed) pair maps
deterministically to one :class:`~decopt.algorithms.RunRecord`, written as a
CSV with a config fingerprint comment so records from different configs are
never aggregated together.
"""

from __future__ import annotations

import hashlib
import json
import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from decopt import algorithms, allocation, data, oracles, topology

CSV_HEADER = "iter,samples,comm_rounds,grad_norm_sq,consensus_err,f_value"

ALGORITHMS = ("dnss", "dnss_vr", "gt_sa", "dsgt")

# Allowed keys per config section; anything else is rejected by name.
_SCHEMA = {
    "problem": {"kind", "dim", "delta", "L", "seed", "hessian", "path",
                "dim_override", "first_n", "partition", "partition_seed",
                "reg", "shares"},
    "topology": {"kind", "m", "edge_prob", "seed", "target_chi", "tol"},
    "sigmas": {"kind", "values", "base", "ratio", "pilot"},
    "run": {"eps", "algorithm", "seeds", "max_samples", "output",
            "rounds_scale"},
    "overrides": {"eta", "T", "R0", "Rt", "batches", "b", "p", "q",
                  "batch_constant"},
}


class ConfigError(ValueError):
    """Raised for malformed or contradictory experiment configs."""


@dataclass
class ExperimentConfig:
    """Validated experiment description plus its canonical fingerprint."""

    problem: dict
    topology: dict
    sigmas: dict
    run: dict
    overrides: dict
    fingerprint: str

    def replace_algorithm(self, algo: str) -> "ExperimentConfig":
        run = dict(self.run, algorithm=algo)
        return _from_sections({"problem": self.problem, "topology": self.topology,
                               "sigmas": self.sigmas, "run": run,
                               "overrides": self.overrides})


def _fingerprint(sections: dict) -> str:
    blob = json.dumps(sections, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _from_sections(raw: dict) -> ExperimentConfig:
    unknown_sections = set(raw) - set(_SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {sorted(unknown_sections)}")
    for name in ("problem", "topology", "run"):
        if name not in raw:
            raise ConfigError(f"missing config section [{name}]")
    for name, section in raw.items():
        unknown = set(section) - _SCHEMA[name]
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    problem = dict(raw["problem"])
    topo = dict(raw["topology"])
    sigmas = dict(raw.get("sigmas", {}))
    run = dict(raw["run"])
    overrides = dict(raw.get("overrides", {}))
    if problem.get("kind") not in ("quadratic", "logistic", "hard_instance"):
        raise ConfigError(f"unknown problem kind {problem.get('kind')!r}")
    if run.get("algorithm", "dnss") not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {run.get('algorithm')!r}")
    if "eps" not in run or run["eps"] <= 0:
        raise ConfigError("run.eps must be present and > 0")
    run.setdefault("algorithm", "dnss")
    run.setdefault("seeds", [0])
    run.setdefault("max_samples", 0)
    run.setdefault("rounds_scale", 1.0)
    sigmas.setdefault("pilot", 0)
    canon = {"problem": problem, "topology": topo, "sigmas": sigmas,
             "run": run, "overrides": overrides}
    return ExperimentConfig(problem=problem, topology=topo, sigmas=sigmas,
                            run=run, overrides=overrides,
                            fingerprint=_fingerprint(canon))


def load_config(path) -> ExperimentConfig:
    """Load and validate a TOML experiment config."""
    with open(path, "rb") as handle:
        try:
            raw = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from None
    return _from_sections(raw)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, RuntimeError, OSError) as exc:
        raise RuntimeError(f"{name}: {exc}") from exc


def build_topology(cfg: ExperimentConfig):
    """Graph plus Metropolis-Hastings mixing matrix from the config."""
    topo = cfg.topology
    m = int(topo["m"])
    if "target_chi" in topo:
        g = topology.calibrate_random_graph(
            m, float(topo["target_chi"]), float(topo.get("tol", 0.05)),
            seed=topo.get("seed"))
    else:
        g = topology.build_graph(topo["kind"], m,
                                 edge_prob=topo.get("edge_prob"),
                                 seed=topo.get("seed"))
    mix = topology.metropolis_weights(g)
    hard = [v for v in topology.validate_mixing(mix.W)
            if "eigenvalue" not in v]
    if hard:
        raise RuntimeError(f"inadmissible mixing matrix: {'; '.join(hard)}")
    return g, mix


def resolve_sigmas(cfg: ExperimentConfig, m: int) -> np.ndarray:
    """Injected noise profile from the ``[sigmas]`` section."""
    section = cfg.sigmas
    kind = section.get("kind", "explicit")
    if kind == "explicit":
        values = np.asarray(section.get("values", []), dtype=float)
        if values.shape != (m,):
            raise ConfigError(f"sigmas.values must list {m} entries")
        return values
    if kind == "geometric":
        base = float(section.get("base", 1.0))
        ratio = float(section.get("ratio", 1.0))
        if base <= 0 or ratio <= 0:
            raise ConfigError("sigmas.base and sigmas.ratio must be > 0")
        return base * ratio ** np.arange(m)
    raise ConfigError(f"unknown sigmas kind {kind!r}")


@dataclass
class ProblemBundle:
    """Built problem: oracle suite, start point, gap and smoothness bounds."""

    suite: oracles.OracleSuite
    x0: np.ndarray
    delta: float
    L: float


def build_problem(cfg: ExperimentConfig, sigmas: np.ndarray, m: int) -> ProblemBundle:
    prob = cfg.problem
    kind = prob["kind"]
    if kind == "quadratic":
        return _build_quadratic(prob, sigmas, m)
    if kind == "logistic":
        return _build_logistic(prob, sigmas, m)
    return _build_hard_instance(prob, sigmas, m, float(cfg.run["eps"]))


def _build_quadratic(prob, sigmas, m):
    dim = int(prob.get("dim", 10))
    L = float(prob.get("L", 1.0))
    delta = float(prob.get("delta", 1.0))
    rng = np.random.default_rng(prob.get("seed", 0))
    hessian = prob.get("hessian", "random")
    if hessian == "identity":
        mats = [L * np.eye(dim) for _ in range(m)]
    elif hessian == "random":
        mats = []
        for _ in range(m):
            g = rng.normal(size=(dim, dim)) / math.sqrt(dim)
            mats.append(g @ g.T + 0.1 * np.eye(dim))
        mean = sum(mats) / m
        scale = L / float(np.linalg.eigvalsh(mean)[-1])
        mats = [scale * a for a in mats]
    else:
        raise ConfigError(f"unknown hessian kind {hessian!r}")
    vecs = [np.zeros(dim) for _ in range(m)]
    suite = oracles.QuadraticSuite(mats, vecs, sigmas)
    # Minimizer is 0; place x0 along a random direction at gap delta.
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    curv = float(u @ suite.mean_mat @ u)
    x0 = u * math.sqrt(2.0 * delta / curv)
    return ProblemBundle(suite=suite, x0=x0, delta=delta, L=L)


def _build_logistic(prob, sigmas, m):
    if "path" not in prob:
        raise ConfigError("logistic problems need problem.path")
    ds = data.load_libsvm(prob["path"], dim_override=prob.get("dim_override"))
    first_n = int(prob.get("first_n", 0))
    if first_n:
        ds = data.SparseDataset(n=min(first_n, ds.n), d=ds.d,
                                rows=ds.rows[:first_n],
                                labels=ds.labels[:first_n])
    shards = data.partition(ds, m, scheme=prob.get("partition", "uniform_shuffle"),
                            seed=prob.get("partition_seed", 0))
    feats, labels = data.node_arrays(ds, shards)
    suite = oracles.LogisticSuite(feats, labels, sigmas,
                                  reg=float(prob.get("reg", 1e-4)))
    x0 = np.zeros(ds.d)
    L = suite.smoothness_bound()
    # The exact optimality gap of a logistic problem is not available in
    # closed form; the config supplies the bound used by the schedules.
    delta = float(prob.get("delta", 1.0))
    return ProblemBundle(suite=suite, x0=x0, delta=delta, L=L)


def _build_hard_instance(prob, sigmas, m, eps):
    L = float(prob.get("L", 1.0))
    delta = float(prob.get("delta", 1.0))
    shares = prob.get("shares")
    suite = oracles.HardInstanceSuite(m, L, delta, eps, sigmas, shares=shares)
    return ProblemBundle(suite=suite, x0=np.zeros(suite.dim), delta=delta, L=L)


def _build_schedule(cfg, bundle, alloc_sigmas, chi):
    """Theorem-style schedule for the configured algorithm, with overrides."""
    run = cfg.run
    ov = cfg.overrides
    eps = float(run["eps"])
    scale = float(run.get("rounds_scale", 1.0))
    m = bundle.suite.m
    y0 = [float(np.linalg.norm(bundle.suite.local_grad(i, bundle.x0)))
          for i in range(m)]
    algo = run["algorithm"]
    if algo == "dnss_vr":
        cfg_out = algorithms.theorem3_config(
            bundle.delta, bundle.L, alloc_sigmas, eps, chi, y0_norms=y0,
            rounds_scale=scale,
            batch_constant=float(ov.get("batch_constant", 32.0)))
        for key in ("b",):
            if key in ov:
                cfg_out.b = int(ov[key])
        for key in ("p", "q"):
            if key in ov:
                setattr(cfg_out, key, float(ov[key]))
    else:
        cfg_out = algorithms.theorem1_config(
            bundle.delta, bundle.L, alloc_sigmas, eps, chi, y0_norms=y0,
            rounds_scale=scale)
        if algo == "gt_sa":
            cfg_out.batches = allocation.qm_batches(alloc_sigmas, eps).batches
        elif algo == "dsgt":
            cfg_out.batches = allocation.uniform_batches(alloc_sigmas, eps).batches
            cfg_out.R0 = cfg_out.Rt = 1
    if "eta" in ov:
        cfg_out.eta = float(ov["eta"])
    if "T" in ov:
        cfg_out.T = int(ov["T"])
    if "R0" in ov:
        cfg_out.R0 = int(ov["R0"])
    if "Rt" in ov:
        cfg_out.Rt = int(ov["Rt"])
    if "batches" in ov:
        cfg_out.batches = np.asarray(ov["batches"], dtype=np.int64)
    return cfg_out


def run_experiment(cfg: ExperimentConfig, seed: int) -> algorithms.RunRecord:
    """Run one seed of the configured experiment; deterministic per
    (config, seed)."""
    _, mix = _stage("topology", build_topology, cfg)
    m = mix.W.shape[0]
    sigmas = _stage("sigmas", resolve_sigmas, cfg, m)
    bundle = _stage("problem", build_problem, cfg, sigmas, m)
    suite = bundle.suite
    pilot = int(cfg.sigmas.get("pilot", 0))
    if pilot > 0:
        pilot_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x9E3779B9)))
        alloc_sigmas = _stage(
            "sigmas", allocation.estimate_sigmas, suite, bundle.x0, pilot, pilot_rng)
        alloc_sigmas = np.maximum(alloc_sigmas, 1e-12)
    else:
        alloc_sigmas = sigmas
    sched = _stage("allocation", _build_schedule, cfg, bundle, alloc_sigmas, mix.chi)
    budget = int(cfg.run.get("max_samples", 0)) or None
    algo = cfg.run["algorithm"]
    if algo == "dnss":
        rec = _stage("algorithms", algorithms.dnss_run, suite, mix, sched, seed,
                     x0=bundle.x0, max_samples=budget)
    elif algo == "dnss_vr":
        rec = _stage("algorithms", algorithms.dnss_vr_run, suite, mix, sched, seed,
                     x0=bundle.x0, max_samples=budget)
    elif algo == "gt_sa":
        rec = _stage("algorithms", algorithms.gt_sa_run, suite, mix, sched, seed,
                     x0=bundle.x0, max_samples=budget)
    else:
        rec = _stage("algorithms", algorithms.dsgt_run, suite, mix, sched.eta,
                     int(sched.batches[0]), sched.T, seed,
                     x0=bundle.x0, max_samples=budget)
    rec.fingerprint = cfg.fingerprint
    return rec


# ---------------------------------------------------------------------------
# Record CSV files and cross-seed aggregation.

def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def write_record_csv(rec: algorithms.RunRecord, path) -> None:
    """Write one run record with a fingerprint comment, 12 significant digits,
    LF line endings."""
    lines = [f"# fingerprint={rec.fingerprint}", CSV_HEADER]
    for it, samples, comm, gsq, cerr, fval in rec.rows:
        lines.append(f"{it},{samples},{comm},{_fmt(gsq)},{_fmt(cerr)},{_fmt(fval)}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())


def read_record_csv(path) -> algorithms.RunRecord:
    text = Path(path).read_text()
    lines = [l for l in text.splitlines() if l.strip()]
    fingerprint = ""
    if lines and lines[0].startswith("# fingerprint="):
        fingerprint = lines.pop(0).split("=", 1)[1]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing record header")
    rec = algorithms.RunRecord(seed=-1, fingerprint=fingerprint)
    for line in lines[1:]:
        it, samples, comm, gsq, cerr, fval = line.split(",")
        rec.rows.append((int(it), int(samples), int(comm),
                         float(gsq), float(cerr), float(fval)))
    return rec


@dataclass(eq=False)
class AggregateResult:
    """Cross-seed mean/std curves on a shared log-spaced sample grid."""

    grid: np.ndarray
    means: dict
    stds: dict


AGG_METRICS = ("grad_norm_sq", "consensus_err", "f_value")


def aggregate(records, points: int = 200) -> AggregateResult:
    """Resample each record's metric curves onto a common sample-count grid
    (piecewise linear) and return per-point mean and population std."""
    records = list(records)
    if not records:
        raise ValueError("need at least one record to aggregate")
    prints = {rec.fingerprint for rec in records}
    if len(prints) > 1:
        raise ValueError(f"refusing to mix records with fingerprints {sorted(prints)}")
    xs = [rec.column("samples").astype(float) for rec in records]
    lo = max(x.min() for x in xs)
    hi = min(x.max() for x in xs)
    if hi <= lo:
        grid = np.array([max(lo, 1.0)])
    else:
        grid = np.geomspace(max(lo, 1.0), hi, points)
    means, stds = {}, {}
    for metric in AGG_METRICS:
        curves = np.stack([
            np.interp(grid, x, rec.column(metric).astype(float))
            for x, rec in zip(xs, records)])
        means[metric] = curves.mean(axis=0)
        stds[metric] = curves.std(axis=0)
    return AggregateResult(grid=grid, means=means, stds=stds)


def write_aggregate_csv(agg: AggregateResult, fingerprint: str, path) -> None:
    cols = ["samples"]
    for metric in AGG_METRICS:
        cols += [f"{metric}_mean", f"{metric}_std"]
    lines = [f"# fingerprint={fingerprint}", ",".join(cols)]
    for k in range(agg.grid.size):
        row = [_fmt(agg.grid[k])]
        for metric in AGG_METRICS:
            row += [_fmt(agg.means[metric][k]), _fmt(agg.stds[metric][k])]
        lines.append(",".join(row))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode())
