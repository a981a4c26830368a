"""Hyperparameter search over the finite per-family grid.

Twenty trials per (model, fold) study, maximizing validation AUROC. The
sampler is seeded random search without replacement over the exact grid; an
optional "surrogate" mode proposes one-axis mutations of the best points
after a random warm-up. Either way every sampled point lies on the grid and
the sequence is a pure function of the study seed.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .checkpoint import atomic_write_text
from .data import Dataset, FoldSplit
from .models import (
    ATTN_ACTIVATION_OPTIONS,
    ATTN_DROPOUT_OPTIONS,
    ATTN_HEAD_OPTIONS,
    ATTN_LAYER_OPTIONS,
    DROPOUT_OPTIONS,
    EMBED_SIZE_OPTIONS,
    LR_OPTIONS,
    LR_STEP_OPTIONS,
    MLP_LAYER_OPTIONS,
    PRODUCT_OUT_OPTIONS,
    PRODUCT_TYPE_OPTIONS,
    RESIDUAL_OPTIONS,
    ModelConfig,
)
from .rng import derive_seed
from .training import TrainSettings, train_on_fold

SHARED_AXES = (
    ("mlp_layers", MLP_LAYER_OPTIONS),
    ("dropout", DROPOUT_OPTIONS),
    ("lr", LR_OPTIONS),
    ("lr_step", LR_STEP_OPTIONS),
)
PNN_AXES = SHARED_AXES + (
    ("product_type", PRODUCT_TYPE_OPTIONS),
    ("product_out", PRODUCT_OUT_OPTIONS),
)
AUTOINT_AXES = SHARED_AXES + (
    ("embedding_size", EMBED_SIZE_OPTIONS),
    ("attn_layers", ATTN_LAYER_OPTIONS),
    ("attn_heads", ATTN_HEAD_OPTIONS),
    ("attn_dropout", ATTN_DROPOUT_OPTIONS),
    ("attn_activation", ATTN_ACTIVATION_OPTIONS),
    ("attn_residual", RESIDUAL_OPTIONS),
)


class StudyError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    family: str
    axes: tuple[tuple[str, tuple], ...]

    @property
    def size(self) -> int:
        return math.prod(len(options) for _, options in self.axes)

    def point_at(self, index: int) -> dict:
        """Mixed-radix decode of a flat grid index into an axis-value dict."""
        if not 0 <= index < self.size:
            raise IndexError(f"grid index {index} outside [0, {self.size})")
        point = {}
        for name, options in reversed(self.axes):
            index, digit = divmod(index, len(options))
            point[name] = options[digit]
        return {name: point[name] for name, _ in self.axes}

    def index_of(self, point: dict) -> int:
        index = 0
        for name, options in self.axes:
            index = index * len(options) + options.index(point[name])
        return index


def search_space(family: str) -> SearchSpace:
    axes = {"mlp-plus": SHARED_AXES, "pnn": PNN_AXES, "autoint": AUTOINT_AXES}.get(family)
    if axes is None:
        raise StudyError(f"no search space for family {family!r}")
    return SearchSpace(family=family, axes=axes)


def sample_indices(space: SearchSpace, n_trials: int, seed: int) -> list[int]:
    """Random search without replacement: a seeded permutation prefix."""
    rng = np.random.default_rng(derive_seed(seed, "sampler"))
    n = min(n_trials, space.size)
    return rng.permutation(space.size)[:n].tolist()


def surrogate_indices(
    space: SearchSpace, history: list[tuple[int, float]], banned: set[int], seed: int, step: int
) -> int:
    """Propose a neighbor (one axis mutated) of a top-ranked completed point."""
    rng = np.random.default_rng(derive_seed(seed, f"surrogate:{step}"))
    ranked = sorted((v for v in history if not math.isnan(v[1])), key=lambda t: -t[1])
    for index, _ in ranked:
        point = space.point_at(index)
        axis_order = rng.permutation(len(space.axes))
        for ai in axis_order:
            name, options = space.axes[ai]
            for value in rng.permutation(len(options)):
                candidate = dict(point)
                candidate[name] = options[value]
                ci = space.index_of(candidate)
                if ci not in banned:
                    return ci
    remaining = [i for i in range(space.size) if i not in banned]
    return int(remaining[rng.integers(len(remaining))])


def point_to_config(family: str, point: dict, overrides: Optional[dict] = None) -> ModelConfig:
    fields = {k: v for k, v in point.items() if k not in ("lr", "lr_step")}
    if overrides:
        fields.update(overrides)
    return ModelConfig(family=family, **fields).validate()


@dataclass
class TrialRecord:
    trial: int
    point: dict
    seed: int
    status: str
    best_epoch: int
    val_auroc: float
    holdout_auroc: float

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["point"] = dict(self.point)
        if isinstance(d["point"].get("mlp_layers"), tuple):
            d["point"]["mlp_layers"] = list(d["point"]["mlp_layers"])
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrialRecord":
        point = dict(d["point"])
        if "mlp_layers" in point:
            point["mlp_layers"] = tuple(point["mlp_layers"])
        return cls(
            trial=d["trial"],
            point=point,
            seed=d["seed"],
            status=d["status"],
            best_epoch=d["best_epoch"],
            val_auroc=d["val_auroc"],
            holdout_auroc=d["holdout_auroc"],
        )


# task runner ---------------------------------------------------------------

@dataclass
class RunTask:
    tag: str
    dataset_name: str
    config: ModelConfig
    settings: TrainSettings
    fold: FoldSplit


@dataclass
class TaskOutcome:
    tag: str
    status: str
    best_epoch: int
    val_auroc: float
    holdout_auroc: float
    n_epochs: int


_WORKER_DATASETS: dict[str, Dataset] = {}


def _init_worker(datasets: dict[str, Dataset]):
    _WORKER_DATASETS.update(datasets)


def _run_task(task: RunTask) -> TaskOutcome:
    dataset = _WORKER_DATASETS[task.dataset_name]
    run = train_on_fold(task.config, dataset, task.fold, task.settings)
    r = run.result
    return TaskOutcome(
        tag=task.tag,
        status=r.status,
        best_epoch=r.best_epoch,
        val_auroc=r.best_val_auroc,
        holdout_auroc=r.holdout_auroc,
        n_epochs=len(r.logs),
    )


def run_tasks(tasks: list[RunTask], datasets: dict[str, Dataset], jobs: int = 1) -> list[TaskOutcome]:
    """Run fit tasks, each owning its model; results return in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        _init_worker(datasets)
        return [_run_task(t) for t in tasks]
    # Children spawn fresh interpreters and read BLAS thread counts from the
    # environment at import time; pin them to 1 to avoid oversubscription.
    pinned = {"OPENBLAS_NUM_THREADS": "1", "OMP_NUM_THREADS": "1", "MKL_NUM_THREADS": "1"}
    saved = {k: os.environ.get(k) for k in pinned}
    os.environ.update(pinned)
    try:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(jobs, len(tasks)), initializer=_init_worker, initargs=(datasets,)) as pool:
            return pool.map(_run_task, tasks)
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


# studies --------------------------------------------------------------------

@dataclass
class StudyResult:
    family: str
    dataset: str
    fold: int
    seed: int
    sampler: str
    records: list[TrialRecord]
    best: TrialRecord


def run_study(
    family: str,
    dataset: Dataset,
    fold: FoldSplit,
    batch_size: int,
    ghost_size: int,
    n_trials: int = 20,
    seed: int = 0,
    sampler: str = "random",
    jobs: int = 1,
    config_overrides: Optional[dict] = None,
    existing: Optional[list[TrialRecord]] = None,
) -> StudyResult:
    space = search_space(family)
    done: dict[int, TrialRecord] = {r.trial: r for r in (existing or [])}

    def settings_for(trial: int, point: dict) -> TrainSettings:
        return TrainSettings(
            batch_size=batch_size,
            ghost_size=ghost_size,
            lr=point["lr"],
            lr_step=point["lr_step"],
            seed=derive_seed(seed, f"trial:{trial}"),
        )

    if sampler == "random":
        indices = sample_indices(space, n_trials, seed)
        tasks = []
        for trial, index in enumerate(indices):
            if trial in done:
                continue
            point = space.point_at(index)
            tasks.append(
                RunTask(
                    tag=str(trial),
                    dataset_name=dataset.name,
                    config=point_to_config(family, point, config_overrides),
                    settings=settings_for(trial, point),
                    fold=fold,
                )
            )
        outcomes = run_tasks(tasks, {dataset.name: dataset}, jobs=jobs)
        for task, outcome in zip(tasks, outcomes):
            trial = int(task.tag)
            done[trial] = TrialRecord(
                trial=trial,
                point=space.point_at(indices[trial]),
                seed=task.settings.seed,
                status=outcome.status,
                best_epoch=outcome.best_epoch,
                val_auroc=outcome.val_auroc,
                holdout_auroc=outcome.holdout_auroc,
            )
    elif sampler == "surrogate":
        warmup = sample_indices(space, min(10, n_trials), seed)
        used: set[int] = set()
        history: list[tuple[int, float]] = []
        for trial in range(n_trials):
            if trial < len(warmup):
                index = warmup[trial]
            else:
                index = surrogate_indices(space, history, used, seed, trial)
            used.add(index)
            if trial in done:
                record = done[trial]
                history.append((space.index_of(record.point), record.val_auroc))
                continue
            point = space.point_at(index)
            settings = settings_for(trial, point)
            run = train_on_fold(point_to_config(family, point, config_overrides), dataset, fold, settings)
            record = TrialRecord(
                trial=trial,
                point=point,
                seed=settings.seed,
                status=run.result.status,
                best_epoch=run.result.best_epoch,
                val_auroc=run.result.best_val_auroc,
                holdout_auroc=run.result.holdout_auroc,
            )
            done[trial] = record
            history.append((index, record.val_auroc if record.status == "ok" else math.nan))
    else:
        raise StudyError(f"unknown sampler {sampler!r}")

    records = [done[t] for t in sorted(done)]
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise StudyError(f"all {len(records)} trials failed for {family} on {dataset.name}")
    best = max(ok, key=lambda r: (r.val_auroc, -r.trial))
    return StudyResult(
        family=family,
        dataset=dataset.name,
        fold=fold.fold,
        seed=seed,
        sampler=sampler,
        records=records,
        best=best,
    )


def write_trials_jsonl(path, records: list[TrialRecord]):
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in records]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_trials_jsonl(path) -> list[TrialRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            records.append(TrialRecord.from_json_dict(json.loads(line)))
    return records


# aggregation -----------------------------------------------------------------

def aggregate_results(rows: list[dict]) -> dict:
    """Summarize holdout AUROC over folds x seeds, percent-scaled to 1 decimal.

    Each row needs keys: dataset, holdout_auroc. Standard deviation matches
    the reported convention (population, over the fold/seed scores).
    """
    if not rows:
        raise StudyError("nothing to aggregate")
    by_dataset: dict[str, list[float]] = {}
    for row in rows:
        by_dataset.setdefault(row["dataset"], []).append(float(row["holdout_auroc"]))
    summary = {}
    for name in sorted(by_dataset):
        pct = np.asarray(by_dataset[name]) * 100.0
        summary[name] = {
            "mean_pct": round(float(pct.mean()), 1),
            "sd_pct": round(float(pct.std()), 1),
            "n_runs": int(pct.size),
        }
    overall = np.mean([v["mean_pct"] for v in summary.values()])
    return {"datasets": summary, "mean_pct": round(float(overall), 1)}


def summary_csv_text(aggregates: dict[str, dict]) -> str:
    """Benchmark-table CSV: one dataset per row, one family per column pair."""
    families = sorted(aggregates)
    datasets = sorted({d for agg in aggregates.values() for d in agg["datasets"]})
    header = ["dataset"]
    for fam in families:
        header += [f"{fam}_mean_pct", f"{fam}_sd_pct"]
    lines = [",".join(header)]
    for name in datasets:
        row = [name]
        for fam in families:
            cell = aggregates[fam]["datasets"].get(name)
            row += [f"{cell['mean_pct']:.1f}", f"{cell['sd_pct']:.1f}"] if cell else ["", ""]
        lines.append(",".join(row))
    mean_row = ["mean"]
    for fam in families:
        mean_row += [f"{aggregates[fam]['mean_pct']:.1f}", ""]
    lines.append(",".join(mean_row))
    return "\n".join(lines) + "\n"
