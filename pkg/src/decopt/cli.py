"""Command-line interface for the decentralized optimization simulator.

Subcommands:
  run              run the configured algorithm over all seeds, write CSVs
  sweep            run several algorithms on the shared problem
  allocate         print the batch-allocation table for the config's profile
  mixinfo          print mixing-matrix spectral data and gossip round counts
  lowerbound-demo  empirical check of the chain-construction sample threshold

Seeds may run concurrently; the DOPT_SIM_THREADS environment variable caps
the worker count (0 or unset = one worker per CPU, capped at the seed count).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from decopt import algorithms, allocation, oracles
from decopt.experiment import (
    ExperimentConfig,
    aggregate,
    load_config,
    run_experiment,
    write_aggregate_csv,
    write_record_csv,
)


def _worker_count(n_seeds: int) -> int:
    raw = os.environ.get("DOPT_SIM_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"DOPT_SIM_THREADS must be an integer, got {raw!r}")
    if cap < 0:
        raise ValueError(f"DOPT_SIM_THREADS must be >= 0, got {cap}")
    if cap == 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_seeds))


def _run_seeds(cfg: ExperimentConfig, seeds) -> list:
    workers = _worker_count(len(seeds))
    if workers == 1:
        return [run_experiment(cfg, seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: run_experiment(cfg, s), seeds))


def _write_algo(cfg: ExperimentConfig, out_dir: Path, prefix: str) -> None:
    seeds = [int(s) for s in cfg.run["seeds"]]
    records = _run_seeds(cfg, seeds)
    out_dir.mkdir(parents=True, exist_ok=True)
    for seed, rec in zip(seeds, records):
        write_record_csv(rec, out_dir / f"{prefix}-seed{seed}.csv")
    agg = aggregate(records)
    write_aggregate_csv(agg, records[0].fingerprint,
                        out_dir / f"{prefix}-aggregate.csv")
    print(f"{prefix}: {len(seeds)} seed(s) -> {out_dir}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out or cfg.run.get("output", "out"))
    _write_algo(cfg, out_dir, cfg.run["algorithm"])
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    if not algos:
        raise ValueError("no algorithms given to --algos")
    out_dir = Path(args.out or cfg.run.get("output", "out"))
    for algo in algos:
        _write_algo(cfg.replace_algorithm(algo), out_dir, algo)
    return 0


def cmd_allocate(args) -> int:
    from decopt.experiment import resolve_sigmas

    cfg = load_config(args.config)
    m = int(cfg.topology["m"])
    sigmas = resolve_sigmas(cfg, m)
    eps = float(cfg.run["eps"])
    opt = allocation.optimal_batches(sigmas, eps)
    th1 = allocation.theorem1_batches(sigmas, eps)
    uni = allocation.uniform_batches(sigmas, eps)
    qm = allocation.qm_batches(sigmas, eps)
    print("node,sigma,B_optimal,B_theorem1,B_uniform,B_qm")
    for i in range(m):
        print(f"{i},{sigmas[i]:.6g},{opt.batches[i]:.6g},"
              f"{th1.batches[i]},{uni.batches[i]},{qm.batches[i]}")
    print(f"# totals: optimal={opt.total:.6g} theorem1={th1.total:.0f} "
          f"uniform={uni.total:.0f} qm={qm.total:.0f}")
    return 0


def cmd_mixinfo(args) -> int:
    from decopt.experiment import build_topology, resolve_sigmas

    cfg = load_config(args.config)
    _, mix = build_topology(cfg)
    m = mix.W.shape[0]
    print(f"m = {m}")
    print(f"lambda2 = {mix.lambda2:.10g}")
    print(f"chi = {mix.chi:.10g}")
    scale = float(cfg.run.get("rounds_scale", 1.0))
    sig = resolve_sigmas(cfg, m)
    eps = float(cfg.run["eps"])
    tracking = algorithms.theorem1_config(1.0, 1.0, sig, eps, mix.chi,
                                          rounds_scale=scale)
    vr = algorithms.theorem3_config(1.0, 1.0, sig, eps, mix.chi,
                                    rounds_scale=scale)
    print(f"Rt_tracking = {tracking.Rt}")
    print(f"Rt_vr = {vr.Rt}")
    return 0


def cmd_lowerbound_demo(args) -> int:
    sigmas = np.asarray([float(s) for s in args.sigmas.split(",")], dtype=float)
    if sigmas.size != args.m:
        raise ValueError(f"--sigmas must list {args.m} values")
    suite = oracles.HardInstanceSuite(args.m, args.L, args.delta, args.eps, sigmas)
    rng = np.random.default_rng(args.seed)
    print("node,chain_len,success_prob,draw_threshold,trials,frac_incomplete")
    for i in range(args.m):
        dim = int(suite.lengths[i])
        p = float(suite.probs[i])
        threshold = suite.progress_threshold(i)
        # Largest draw count strictly below the threshold.
        budget = int(np.floor(threshold))
        if budget == threshold:
            budget -= 1
        incomplete = 0
        for _ in range(args.trials):
            if oracles.chain_fill_trial(dim, p, max(budget, 0), rng) < dim:
                incomplete += 1
        frac = incomplete / args.trials
        print(f"{i},{dim},{p:.6g},{threshold:.6g},{args.trials},{frac:.3f}")
    print("# with fewer draws than the threshold, each chain should stay "
          "incomplete in at least half the trials")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="decopt", description="decentralized stochastic optimization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured algorithm")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run several algorithms")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--algos", default="dnss,gt_sa,dsgt",
                         help="comma-separated algorithm names")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_alloc = sub.add_parser("allocate", help="print the allocation table")
    p_alloc.add_argument("config")
    p_alloc.set_defaults(fn=cmd_allocate)

    p_mix = sub.add_parser("mixinfo", help="print mixing spectral data")
    p_mix.add_argument("config")
    p_mix.set_defaults(fn=cmd_mixinfo)

    p_demo = sub.add_parser("lowerbound-demo",
                            help="chain-construction sample threshold demo")
    p_demo.add_argument("--m", type=int, default=1)
    p_demo.add_argument("--eps", type=float, default=0.1)
    p_demo.add_argument("--sigmas", default="1.0")
    p_demo.add_argument("--delta", type=float, default=50.0)
    p_demo.add_argument("--L", type=float, default=1.0)
    p_demo.add_argument("--trials", type=int, default=100)
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.set_defaults(fn=cmd_lowerbound_demo)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # surface stage-tagged failures as exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
