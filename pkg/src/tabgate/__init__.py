"""Gated tabular neural networks on a self-contained float64 autodiff engine."""

from .autodiff import Tensor, cross_entropy
from .data import Dataset, FeatureSchema, FoldSplit, encode_batch, fit_schema, load_csv, make_folds
from .hpo import SearchSpace, TrialRecord, aggregate_results, run_study, search_space
from .interpret import GateReport, gate_passage_stats, suggest_and_apply_drops
from .layers import GhostBatchNorm, LeakyGate, gate_partition
from .models import ModelConfig, TabularModel, build_model, parameter_count
from .optim import Adam, Parameter, StepDecaySchedule
from .training import TrainSettings, auroc, train_model, train_on_fold

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Dataset",
    "FeatureSchema",
    "FoldSplit",
    "GateReport",
    "GhostBatchNorm",
    "LeakyGate",
    "ModelConfig",
    "Parameter",
    "SearchSpace",
    "StepDecaySchedule",
    "TabularModel",
    "Tensor",
    "TrainSettings",
    "TrialRecord",
    "aggregate_results",
    "auroc",
    "build_model",
    "cross_entropy",
    "encode_batch",
    "fit_schema",
    "gate_partition",
    "gate_passage_stats",
    "load_csv",
    "make_folds",
    "parameter_count",
    "run_study",
    "search_space",
    "suggest_and_apply_drops",
    "train_model",
    "train_on_fold",
]
