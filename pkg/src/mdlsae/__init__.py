"""Sparse autoencoders selected by the description length of their codes."""
from .codec import (DlReport, FeatureStats, FeatureTree, collect_stats,
                    effective_precision_search, entropy_dl, onehot_paper_arithmetic,
                    tree_dl, upper_bound_dl)
from .core_math import bernoulli_entropy, discrete_entropy, quantize_uniform
from .sae import SaeConfig, SparseAutoencoder, TrainingError, TrainReport, train
from .sweep import SweepPlan, run_sweep, select_mdl
from .toys import ToyWorld, enumeration_oracle, hier_analysis, split_analysis

__version__ = "0.1.0"

__all__ = [
    "DlReport", "FeatureStats", "FeatureTree", "SaeConfig", "SparseAutoencoder",
    "SweepPlan", "ToyWorld", "TrainReport", "TrainingError", "bernoulli_entropy",
    "collect_stats", "discrete_entropy", "effective_precision_search", "entropy_dl",
    "enumeration_oracle", "hier_analysis", "onehot_paper_arithmetic", "quantize_uniform",
    "run_sweep", "select_mdl", "split_analysis", "train", "tree_dl", "upper_bound_dl",
]
