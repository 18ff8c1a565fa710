"""Decentralized stochastic optimization simulator.

Simulates gradient-tracking methods with accelerated gossip consensus and
node-specific mini-batch allocation on undirected communication graphs.
"""

from decopt.topology import (
    Graph,
    MixingMatrix,
    build_graph,
    calibrate_random_graph,
    metropolis_weights,
    spectral_gap,
    validate_mixing,
)
from decopt.consensus import (
    consensus_error,
    contraction_factor,
    fastmix,
    rounds_for_target,
)
from decopt.allocation import (
    AllocationPlan,
    MeanStats,
    Theorem3Schedule,
    estimate_sigmas,
    mean_stats,
    mse_bound,
    optimal_batches,
    qm_batches,
    theorem1_batches,
    theorem3_schedule,
    uniform_batches,
)
from decopt.oracles import (
    HardInstanceSuite,
    LogisticSuite,
    OracleSuite,
    QuadraticSuite,
)
from decopt.algorithms import (
    DnssConfig,
    DnssVrConfig,
    RunRecord,
    dnss_run,
    dnss_vr_run,
    dsgt_run,
    gt_sa_run,
    theorem1_config,
    theorem3_config,
)

__all__ = [
    "Graph",
    "MixingMatrix",
    "build_graph",
    "calibrate_random_graph",
    "metropolis_weights",
    "spectral_gap",
    "validate_mixing",
    "consensus_error",
    "contraction_factor",
    "fastmix",
    "rounds_for_target",
    "AllocationPlan",
    "MeanStats",
    "Theorem3Schedule",
    "estimate_sigmas",
    "mean_stats",
    "mse_bound",
    "optimal_batches",
    "qm_batches",
    "theorem1_batches",
    "theorem3_schedule",
    "uniform_batches",
    "OracleSuite",
    "QuadraticSuite",
    "LogisticSuite",
    "HardInstanceSuite",
    "DnssConfig",
    "DnssVrConfig",
    "RunRecord",
    "dnss_run",
    "dnss_vr_run",
    "dsgt_run",
    "gt_sa_run",
    "theorem1_config",
    "theorem3_config",
]
