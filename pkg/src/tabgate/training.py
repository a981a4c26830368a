"""Training loop: seeded mini-batch epochs, AUROC early stopping, step-decay lr.

The protocol per epoch: shuffle the train rows, iterate mini-batches (ragged
last batch kept), forward / cross-entropy / backward / Adam step at the
scheduled learning rate, then score the validation split in eval mode. The
best validation-AUROC epoch is tracked (earliest epoch wins ties); training
stops after 15 epochs without improvement or at the epoch cap. The best
parameters are restored before the holdout split is scored exactly once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import cross_entropy
from .data import Dataset, EncodedBatch, FeatureSchema, FoldSplit, encode_batch, fit_schema
from .models import LR_OPTIONS, LR_STEP_OPTIONS, ModelConfig, TabularModel, build_model
from .optim import Adam, StepDecaySchedule
from .rng import derive_seed

DEFAULT_PATIENCE = 15
DEFAULT_MAX_EPOCHS = 200


class MetricError(ValueError):
    pass


def auroc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative, ties 1/2.

    Rank-sum formulation with midranks for ties; O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError(f"scores/labels must be matching vectors, got {scores.shape} vs {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auroc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class TrainSettings:
    batch_size: int
    ghost_size: int
    lr: float
    lr_step: int
    seed: int
    patience: int = DEFAULT_PATIENCE
    max_epochs: int = DEFAULT_MAX_EPOCHS

    def validate(self):
        if self.ghost_size > self.batch_size:
            raise ValueError(f"ghost_size {self.ghost_size} exceeds batch_size {self.batch_size}")
        if self.patience <= 0:
            raise ValueError("patience must be positive")
        if self.lr not in LR_OPTIONS:
            raise ValueError(f"lr must be one of {list(LR_OPTIONS)}, got {self.lr}")
        if self.lr_step not in LR_STEP_OPTIONS:
            raise ValueError(f"lr_step must be one of {list(LR_STEP_OPTIONS)}, got {self.lr_step}")
        return self

    def to_json_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "ghost_size": self.ghost_size,
            "lr": self.lr,
            "lr_step": self.lr_step,
            "seed": self.seed,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
        }


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_auroc: float
    lr: float
    wall_time: float


@dataclass
class TrainResult:
    status: str  # "ok" | "failed"
    best_epoch: int
    best_val_auroc: float
    holdout_auroc: float
    logs: list[EpochLog]
    best_state: dict[str, np.ndarray]
    failed_epoch: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class EncodedSplits:
    train: EncodedBatch
    validation: EncodedBatch
    holdout: EncodedBatch


def encode_splits(schema: FeatureSchema, dataset: Dataset, fold: FoldSplit) -> EncodedSplits:
    return EncodedSplits(
        train=encode_batch(schema, dataset, fold.train_ids),
        validation=encode_batch(schema, dataset, fold.validation_ids),
        holdout=encode_batch(schema, dataset, fold.holdout_ids),
    )


def _score(model: TabularModel, batch: EncodedBatch) -> float:
    model.eval()
    value = auroc(model.predict_scores(batch), batch.labels)
    model.train()
    return value


def train_model(model: TabularModel, splits: EncodedSplits, settings: TrainSettings) -> TrainResult:
    settings.validate()
    schedule = StepDecaySchedule(settings.lr, settings.lr_step)
    optimizer = Adam(model.parameters())
    shuffle_rng = np.random.default_rng(derive_seed(settings.seed, "shuffle"))
    n_train = splits.train.n_rows
    logs: list[EpochLog] = []
    best_epoch = -1
    best_val = -np.inf
    best_state: dict[str, np.ndarray] = {}
    model.train()
    started = time.perf_counter()
    # Ragged last batch is kept; a trailing single row joins the previous
    # batch (same rule as ghost batch norm's remainder handling).
    batch_bounds = []
    for lo in range(0, n_train, settings.batch_size):
        batch_bounds.append((lo, min(lo + settings.batch_size, n_train)))
    if len(batch_bounds) > 1 and batch_bounds[-1][1] - batch_bounds[-1][0] == 1:
        lo, _ = batch_bounds.pop()
        batch_bounds[-1] = (batch_bounds[-1][0], n_train)
    for epoch in range(settings.max_epochs):
        lr = schedule.lr_at(epoch)
        order = shuffle_rng.permutation(n_train)
        loss_sum = 0.0
        for lo, hi in batch_bounds:
            idx = order[lo:hi]
            batch = splits.train.take(idx)
            logits = model.forward(batch)
            loss = cross_entropy(logits, batch.labels)
            if not loss.all_finite():
                return TrainResult(
                    status="failed",
                    best_epoch=best_epoch,
                    best_val_auroc=float(best_val) if best_epoch >= 0 else float("nan"),
                    holdout_auroc=float("nan"),
                    logs=logs,
                    best_state=best_state,
                    failed_epoch=epoch,
                )
            loss.backward()
            optimizer.step(lr)
            optimizer.zero_grad()
            loss_sum += loss.item() * len(idx)
        val_auroc = _score(model, splits.validation)
        logs.append(
            EpochLog(
                epoch=epoch,
                train_loss=loss_sum / n_train,
                val_auroc=val_auroc,
                lr=lr,
                wall_time=time.perf_counter() - started,
            )
        )
        if val_auroc > best_val:  # strict: ties keep the earliest epoch
            best_val = val_auroc
            best_epoch = epoch
            best_state = model.snapshot()
        if epoch - best_epoch >= settings.patience:
            break
    model.load_state(best_state)
    model.eval()
    holdout_auroc = auroc(model.predict_scores(splits.holdout), splits.holdout.labels)
    return TrainResult(
        status="ok",
        best_epoch=best_epoch,
        best_val_auroc=float(best_val),
        holdout_auroc=float(holdout_auroc),
        logs=logs,
        best_state=best_state,
    )


@dataclass
class FoldRun:
    """Everything produced by fitting one config on one fold."""

    config: ModelConfig
    settings: TrainSettings
    fold: FoldSplit
    schema: FeatureSchema
    result: TrainResult
    model: TabularModel


def train_on_fold(
    config: ModelConfig,
    dataset: Dataset,
    fold: FoldSplit,
    settings: TrainSettings,
) -> FoldRun:
    """Fit the per-fold schema on train rows, build the model, run training."""
    schema = fit_schema(dataset, fold.train_ids)
    splits = encode_splits(schema, dataset, fold)
    model = build_model(config, schema, ghost_size=settings.ghost_size, seed=settings.seed)
    result = train_model(model, splits, settings)
    return FoldRun(config=config, settings=settings, fold=fold, schema=schema, result=result, model=model)
