"""Preference optimization for TSP heatmap policies."""

from .instances import Instance, Tour, generate_uniform, parse_tsplib, reward, tour_length
from .kernels import BACKEND
from .local_search import LsConfig, make_finetune_pairs, two_opt
from .optim import OptimizerConfig, OptimizerState, optimizer_step
from .oracle import OracleResult, optimality_gap, solve_exhaustive, solve_held_karp
from .policy import HeatmapPolicy, SampleBatch, grad_log_prob, greedy_decode, init_heatmap, sample_tours, score_tour
from .preference import (
    PreferenceLabels,
    PreferenceModel,
    implied_reward_diff,
    make_labels,
    pair_weight,
    po_loss_pairwise,
    po_loss_pl,
)
from .reinforce import ReinforceBatchResult, reinforce_advantages
from .trainer import StepMetrics, TrainConfig, advantage_report, consistency_metric, train_instance

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "HeatmapPolicy",
    "Instance",
    "LsConfig",
    "OptimizerConfig",
    "OptimizerState",
    "OracleResult",
    "PreferenceLabels",
    "PreferenceModel",
    "ReinforceBatchResult",
    "SampleBatch",
    "StepMetrics",
    "Tour",
    "TrainConfig",
    "advantage_report",
    "consistency_metric",
    "generate_uniform",
    "grad_log_prob",
    "greedy_decode",
    "implied_reward_diff",
    "init_heatmap",
    "make_finetune_pairs",
    "make_labels",
    "optimality_gap",
    "optimizer_step",
    "pair_weight",
    "parse_tsplib",
    "po_loss_pairwise",
    "po_loss_pl",
    "reinforce_advantages",
    "reward",
    "sample_tours",
    "score_tour",
    "solve_exhaustive",
    "solve_held_karp",
    "tour_length",
    "train_instance",
    "two_opt",
]
