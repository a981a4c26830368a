"""Leaky-gate output analysis: per-column pass/leak rates, cross-gate
agreement, and identification of droppable input columns.

A value "passes" a gate when its post-gate output is strictly positive,
which happens exactly when the pre-activation w*x + b is strictly positive;
both classifications are computed and asserted equal. The two gates of an
MLP+ block "agree" on a row when both outputs are positive or both are
non-positive. Columns with zero positive rows at every gate are candidates
for dropping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, EncodedBatch, FoldSplit, encode_batch
from .models import ModelConfig, TabularModel
from .training import FoldRun, TrainSettings, train_on_fold


class GateAnalysisError(RuntimeError):
    pass


@dataclass
class ColumnGateStats:
    column: str
    field_name: str
    main_pct: float
    skip_pct: float
    agreement_pct: float


@dataclass
class FieldRollup:
    field_name: str
    main_max_pct: float
    skip_max_pct: float
    agreement_mean_pct: float
    drop_candidate: bool


@dataclass
class GateReport:
    columns: list[ColumnGateStats]  # ordered by descending agreement
    fields: list[FieldRollup]
    drop_candidates: list[str]
    n_rows: int
    config: Optional[ModelConfig] = None
    settings: Optional[TrainSettings] = None
    fold: Optional[FoldSplit] = None
    baseline_holdout_auroc: Optional[float] = None

    def to_csv_text(self) -> str:
        lines = ["column,main_gate_pct,skip_gate_pct,agreement_pct"]
        for c in self.columns:
            lines.append(f"{c.column},{c.main_pct:.1f},{c.skip_pct:.1f},{c.agreement_pct:.1f}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "columns": [
                {
                    "column": c.column,
                    "field": c.field_name,
                    "main_gate_pct": c.main_pct,
                    "skip_gate_pct": c.skip_pct,
                    "agreement_pct": c.agreement_pct,
                }
                for c in self.columns
            ],
            "fields": [
                {
                    "field": f.field_name,
                    "main_max_pct": f.main_max_pct,
                    "skip_max_pct": f.skip_max_pct,
                    "agreement_mean_pct": f.agreement_mean_pct,
                    "drop_candidate": f.drop_candidate,
                }
                for f in self.fields
            ],
            "drop_candidates": list(self.drop_candidates),
            "baseline_holdout_auroc": self.baseline_holdout_auroc,
        }


def _input_column_labels(model: TabularModel) -> list[tuple[str, str]]:
    """(column label, field name) for each flat model-input column."""
    m = model.config.embedding_size
    raw = model.config.raw_numeric_input and model.config.family == "mlp-plus"
    labels = []
    for name, kind in zip(model.field_names, model.field_kinds):
        if kind == "numeric" and raw:
            labels.append((name, name))
        else:
            labels.extend((f"{name}[{d}]", name) for d in range(m))
    return labels


def gate_passage_stats(model: TabularModel, batch: EncodedBatch) -> GateReport:
    """Pass/leak percentages per input column at the two MLP+ gates."""
    if model.config.family != "mlp-plus":
        raise GateAnalysisError("gate analysis runs on mlp-plus models")
    if not (model.config.use_gate and model.config.use_skip):
        raise GateAnalysisError("gate analysis needs use_gate and use_skip enabled")
    was_training = model.training
    model.eval()
    try:
        x = model._embed_flat(batch).data
        block = model.block
        reports = {}
        for gate_name, gate in (("main", block.main_gate), ("skip", block.skip_gate)):
            pre = x * gate.w.data + gate.b.data
            post = np.where(pre > 0, pre, gate.slope * pre)
            pre_positive = pre > 0
            post_positive = post > 0
            if not np.array_equal(pre_positive, post_positive):
                raise AssertionError("pre-activation and post-gate positivity disagree")
            reports[gate_name] = pre_positive
    finally:
        model.train(was_training)
    main_pos, skip_pos = reports["main"], reports["skip"]
    n_rows = x.shape[0]
    main_pct = main_pos.mean(axis=0) * 100.0
    skip_pct = skip_pos.mean(axis=0) * 100.0
    agree_pct = (main_pos == skip_pos).mean(axis=0) * 100.0

    labels = _input_column_labels(model)
    columns = [
        ColumnGateStats(
            column=labels[i][0],
            field_name=labels[i][1],
            main_pct=float(main_pct[i]),
            skip_pct=float(skip_pct[i]),
            agreement_pct=float(agree_pct[i]),
        )
        for i in range(len(labels))
    ]
    order = sorted(range(len(columns)), key=lambda i: (-columns[i].agreement_pct, i))
    ordered = [columns[i] for i in order]

    rollups = []
    for name in model.field_names:
        idx = [i for i, (_, f) in enumerate(labels) if f == name]
        main_max = float(main_pct[idx].max())
        skip_max = float(skip_pct[idx].max())
        rollups.append(
            FieldRollup(
                field_name=name,
                main_max_pct=main_max,
                skip_max_pct=skip_max,
                agreement_mean_pct=float(agree_pct[idx].mean()),
                drop_candidate=(main_max == 0.0 and skip_max == 0.0),
            )
        )
    candidates = [r.field_name for r in rollups if r.drop_candidate]
    return GateReport(
        columns=ordered,
        fields=rollups,
        drop_candidates=candidates,
        n_rows=n_rows,
    )


def gate_report_for_run(run: FoldRun, dataset: Dataset) -> GateReport:
    """Gate report over the run's train + validation rows, with refit context."""
    rows = np.concatenate([run.fold.train_ids, run.fold.validation_ids])
    batch = encode_batch(run.schema, dataset, rows)
    report = gate_passage_stats(run.model, batch)
    report.config = run.config
    report.settings = run.settings
    report.fold = run.fold
    report.baseline_holdout_auroc = run.result.holdout_auroc
    return report


@dataclass
class DropComparison:
    noop: bool
    dropped: list[str]
    before_holdout_auroc: Optional[float]
    after_holdout_auroc: Optional[float]

    def to_json_dict(self) -> dict:
        return {
            "noop": self.noop,
            "dropped": list(self.dropped),
            "before_holdout_auroc": self.before_holdout_auroc,
            "after_holdout_auroc": self.after_holdout_auroc,
        }


def suggest_and_apply_drops(report: GateReport, dataset: Dataset) -> tuple[Dataset, DropComparison]:
    """Drop the report's candidate columns and refit with identical settings.

    With no candidates this is a no-op returning the original dataset.
    """
    if not report.drop_candidates:
        return dataset, DropComparison(
            noop=True,
            dropped=[],
            before_holdout_auroc=report.baseline_holdout_auroc,
            after_holdout_auroc=report.baseline_holdout_auroc,
        )
    if report.config is None or report.settings is None or report.fold is None:
        raise GateAnalysisError("report lacks refit context (config/settings/fold)")
    reduced = dataset.drop_columns(report.drop_candidates)
    refit = train_on_fold(report.config, reduced, report.fold, report.settings)
    return reduced, DropComparison(
        noop=False,
        dropped=list(report.drop_candidates),
        before_holdout_auroc=report.baseline_holdout_auroc,
        after_holdout_auroc=refit.result.holdout_auroc,
    )


def write_gate_report(report: GateReport, csv_path, json_path):
    from .checkpoint import atomic_write_text

    atomic_write_text(csv_path, report.to_csv_text())
    atomic_write_text(json_path, json.dumps(report.to_json_dict(), indent=1, sort_keys=True))
