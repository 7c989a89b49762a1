"""Sparse Ising graph recovery by pairwise Bayesian model selection."""
from .baseline import PlmFit, RecoveryMetrics, lambda_max, metrics, plm_graph, plm_l1_fit, plm_recover, roc_sweep
from .classifier import DecisionCache, SparsityPrior, confidence, decide, decision_table, physical, posterior_gap
from .evidence import PairStats, SaddlePointError, evidence, exact_log_evidence, log_evidence, saddle_point
from .models import MODELS, ModelSpec, fisher_logdet, get_model, grad_log_partition, log_partition
from .pipeline import PriorMode, RecoveryConfig, run_recovery
from .recovery import (
    ConfidenceGraph,
    conditioned_confidence,
    correct_graph,
    n_dependent_epsilon,
    neighbour_weight,
    pair_stats,
    recover,
    self_consistent_epsilon,
)
from .synth import IsingInstance, TopologySpec, exact_sample_small, generate_topology, gibbs_sample, hide_nodes
from .windows import rolling_windows, windowed_correlations

__version__ = "0.1.0"
