"""Command-line surface: train, hpo, ablate, inspect-gates, make-data.

Runs are content-addressed: the run id is a hash of (dataset, config,
settings, fold), so re-running an identical configuration overwrites its
artifacts with byte-identical result files. Timestamps live in a separate
meta.json. Exit codes: 0 ok, 1 runtime failure, 2 usage/validation error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import atomic_write_text, load_checkpoint, save_checkpoint
from .data import (
    DataError,
    Dataset,
    FoldSplit,
    load_csv,
    load_registered,
    load_registry,
    make_folds,
)
from .datagen import write_datasets
from .hpo import (
    RunTask,
    StudyError,
    aggregate_results,
    read_trials_jsonl,
    run_study,
    run_tasks,
    summary_csv_text,
    write_trials_jsonl,
)
from .interpret import (
    GateAnalysisError,
    gate_report_for_run,
    suggest_and_apply_drops,
    write_gate_report,
)
from .models import ConfigError, FAMILIES, ModelConfig
from .training import TrainSettings, train_on_fold

log = logging.getLogger("tabgate")

DEFAULT_SEEDS = (20210, 20211)


class UsageError(ValueError):
    pass


def _run_id(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _output_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("TABGATE_OUT", "runs"))


def _load_dataset(args) -> tuple[Dataset, int, int]:
    """Resolve --dataset (registry) or --csv into (dataset, batch, ghost)."""
    if bool(args.dataset) == bool(args.csv):
        raise UsageError("pass exactly one of --dataset or --csv")
    if args.dataset:
        entry, _, dataset = load_registered(args.dataset, args.registry)
        batch = args.batch_size or entry.batch_size
        ghost = args.ghost_size or entry.ghost_batch_size
        return dataset, batch, ghost
    if not args.label:
        raise UsageError("--csv requires --label")
    _, dataset = load_csv(args.csv, args.label, args.positive_class)
    return dataset, args.batch_size or 256, args.ghost_size or 8

def _config_from_args(args) -> ModelConfig:
    if args.config:
        text = Path(args.config).read_text()
        config = ModelConfig.from_json(text)
        if args.family and args.family != config.family:
            raise UsageError(f"--family {args.family} conflicts with config file {config.family}")
        return config
    if not args.family:
        raise UsageError("pass --family or --config")
    fields: dict = {"family": args.family}
    if args.mlp_layers:
        fields["mlp_layers"] = tuple(int(v) for v in args.mlp_layers.split(","))
    if args.dropout is not None:
        fields["dropout"] = args.dropout
    if args.embedding_size:
        fields["embedding_size"] = args.embedding_size
    if args.family == "pnn":
        fields["product_type"] = args.product_type or "inner"
        fields["product_out"] = args.product_out or 20
    if args.family == "autoint":
        fields["attn_layers"] = args.attn_layers or 3
        fields["attn_heads"] = args.attn_heads or 2
        fields["attn_dropout"] = args.attn_dropout if args.attn_dropout is not None else 0.0
        fields["attn_activation"] = args.attn_activation or "leaky_relu"
        fields["attn_residual"] = not args.no_attn_residual
    fields["use_skip"] = not args.no_skip
    fields["use_gate"] = not args.no_gate
    fields["raw_numeric_input"] = args.raw_numeric_input
    return ModelConfig(**fields).validate()


def _parse_folds(spec: str, n_folds: int = 5) -> list[int]:
    if spec == "all":
        return list(range(n_folds))
    try:
        folds = [int(v) for v in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad fold spec {spec!r}") from None
    for f in folds:
        if not 0 <= f < n_folds:
            raise UsageError(f"fold {f} outside [0, {n_folds})")
    return folds


def _parse_seeds(spec: str) -> list[int]:
    try:
        return [int(v) for v in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad seed list {spec!r}") from None


def _epochs_csv_text(logs) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["epoch", "loss", "val_auroc", "lr"])
    for entry in logs:
        writer.writerow([entry.epoch, repr(entry.train_loss), repr(entry.val_auroc), repr(entry.lr)])
    return buf.getvalue()


def cmd_train(args) -> int:
    dataset, batch, ghost = _load_dataset(args)
    config = _config_from_args(args)
    seed = args.seed if args.seed is not None else DEFAULT_SEEDS[0]
    folds = make_folds(dataset.n_rows, dataset.labels, seed)
    fold = folds[args.fold]
    settings = TrainSettings(
        batch_size=batch,
        ghost_size=ghost,
        lr=args.lr,
        lr_step=args.lr_step,
        seed=seed,
        max_epochs=args.max_epochs,
    ).validate()
    payload = {
        "dataset": dataset.name,
        "config": config.to_json_dict(),
        "settings": settings.to_json_dict(),
        "fold": fold.fold,
    }
    run_dir = _output_root(args) / f"run_{_run_id(payload)}"
    started = time.time()
    run = train_on_fold(config, dataset, fold, settings)
    elapsed = time.time() - started
    result = {
        **payload,
        "status": run.result.status,
        "best_epoch": run.result.best_epoch,
        "val_auroc": run.result.best_val_auroc,
        "holdout_auroc": run.result.holdout_auroc,
        "n_epochs": len(run.result.logs),
        "failed_epoch": run.result.failed_epoch,
    }
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(run_dir / "config.json", config.to_json())
    atomic_write_text(run_dir / "result.json", json.dumps(result, indent=1, sort_keys=True))
    atomic_write_text(run_dir / "epochs.csv", _epochs_csv_text(run.result.logs))
    atomic_write_text(run_dir / "fold.json", json.dumps(fold.to_json_dict(), sort_keys=True))
    save_checkpoint(run.model.state_arrays(), run_dir / "checkpoint")
    atomic_write_text(
        run_dir / "meta.json",
        json.dumps({"started_unix": started, "wall_seconds": elapsed}, indent=1),
    )
    print(f"run {run_dir}")
    print(
        f"status={run.result.status} best_epoch={run.result.best_epoch} "
        f"val_auroc={run.result.best_val_auroc:.6f} holdout_auroc={run.result.holdout_auroc:.6f}"
    )
    return 0 if run.result.ok else 1


def cmd_hpo(args) -> int:
    dataset, batch, ghost = _load_dataset(args)
    if not args.family:
        raise UsageError("hpo needs --family")
    seeds = _parse_seeds(args.seeds) if args.seeds else [DEFAULT_SEEDS[0]]
    folds_wanted = _parse_folds(args.folds)
    overrides = {"raw_numeric_input": True} if args.raw_numeric_input else None
    root = _output_root(args) / f"hpo_{dataset.name}_{args.family}"
    best_rows = []
    for seed in seeds:
        folds = make_folds(dataset.n_rows, dataset.labels, seed)
        for fold_idx in folds_wanted:
            study_dir = root / f"seed{seed}_fold{fold_idx}"
            study_dir.mkdir(parents=True, exist_ok=True)
            jsonl = study_dir / "trials.jsonl"
            existing = read_trials_jsonl(jsonl) if jsonl.exists() and args.resume else None
            study = run_study(
                args.family,
                dataset,
                folds[fold_idx],
                batch,
                ghost,
                n_trials=args.trials,
                seed=seed,
                sampler=args.sampler,
                jobs=args.jobs,
                config_overrides=overrides,
                existing=existing,
            )
            write_trials_jsonl(jsonl, study.records)
            summary = {
                "dataset": dataset.name,
                "family": args.family,
                "fold": fold_idx,
                "seed": seed,
                "sampler": args.sampler,
                "n_trials": len(study.records),
                "best": study.best.to_json_dict(),
            }
            atomic_write_text(study_dir / "summary.json", json.dumps(summary, indent=1, sort_keys=True))
            best_rows.append(
                {
                    "dataset": dataset.name,
                    "seed": seed,
                    "fold": fold_idx,
                    "holdout_auroc": study.best.holdout_auroc,
                }
            )
            print(
                f"study seed={seed} fold={fold_idx}: best val={study.best.val_auroc:.6f} "
                f"holdout={study.best.holdout_auroc:.6f} (trial {study.best.trial})"
            )
    aggregate = aggregate_results(best_rows)
    atomic_write_text(root / "summary.json", json.dumps(aggregate, indent=1, sort_keys=True))
    atomic_write_text(root / "summary.csv", summary_csv_text({args.family: aggregate}))
    mean = aggregate["datasets"][dataset.name]["mean_pct"]
    sd = aggregate["datasets"][dataset.name]["sd_pct"]
    print(f"{dataset.name} {args.family}: {mean:.1f} +/- {sd:.1f} over {len(best_rows)} studies")
    return 0


ABLATION_SCENARIOS = (("T", "T"), ("T", "F"), ("F", "F"))


def cmd_ablate(args) -> int:
    dataset, batch, ghost = _load_dataset(args)
    config = _config_from_args(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else list(DEFAULT_SEEDS)
    folds_wanted = _parse_folds(args.folds)
    tasks = []
    for skip, gate in ABLATION_SCENARIOS:
        scenario_cfg = ModelConfig.from_json_dict(
            {**config.to_json_dict(), "use_skip": skip == "T", "use_gate": gate == "T"}
        )
        for seed in seeds:
            folds = make_folds(dataset.n_rows, dataset.labels, seed)
            for fold_idx in folds_wanted:
                settings = TrainSettings(
                    batch_size=batch,
                    ghost_size=ghost,
                    lr=args.lr,
                    lr_step=args.lr_step,
                    seed=seed,
                    max_epochs=args.max_epochs,
                ).validate()
                tasks.append(
                    RunTask(
                        tag=f"skip={skip},gate={gate},seed={seed},fold={fold_idx}",
                        dataset_name=dataset.name,
                        config=scenario_cfg,
                        settings=settings,
                        fold=folds[fold_idx],
                    )
                )
    outcomes = run_tasks(tasks, {dataset.name: dataset}, jobs=args.jobs)
    by_scenario: dict[str, list[float]] = {}
    rows = []
    for task, outcome in zip(tasks, outcomes):
        skip, gate = task.config.use_skip, task.config.use_gate
        key = f"skip={'T' if skip else 'F'}_gate={'T' if gate else 'F'}"
        if outcome.status == "ok":
            by_scenario.setdefault(key, []).append(outcome.holdout_auroc)
        rows.append({"tag": task.tag, "status": outcome.status, "holdout_auroc": outcome.holdout_auroc})
    out_dir = _output_root(args) / f"ablate_{dataset.name}_{config.family}"
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(
        out_dir / "runs.jsonl", "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    )
    scenario_keys = [f"skip={s}_gate={g}" for s, g in ABLATION_SCENARIOS]
    lines = ["dataset," + ",".join(scenario_keys)]
    cells = [
        f"{np.mean(by_scenario[k]) * 100:.1f}" if by_scenario.get(k) else "" for k in scenario_keys
    ]
    lines.append(f"{dataset.name}," + ",".join(cells))
    lines.append("mean," + ",".join(cells))  # single dataset: mean row repeats it
    atomic_write_text(out_dir / "table.csv", "\n".join(lines) + "\n")
    print(f"ablation table -> {out_dir / 'table.csv'}")
    for k in scenario_keys:
        if by_scenario.get(k):
            print(f"  {k}: mean holdout {np.mean(by_scenario[k]):.6f} over {len(by_scenario[k])} runs")
    return 0


def cmd_inspect_gates(args) -> int:
    run_dir = Path(args.run)
    result_path = run_dir / "result.json"
    checkpoint_dir = run_dir / "checkpoint"
    if not result_path.exists() or not (checkpoint_dir / "manifest.json").exists():
        raise UsageError(f"{run_dir} is not a run directory with a checkpoint")
    result = json.loads(result_path.read_text())
    config = ModelConfig.from_json((run_dir / "config.json").read_text())
    dataset, batch, ghost = _load_dataset(args)
    if dataset.name != result["dataset"]:
        log.warning("dataset %r differs from the run's %r", dataset.name, result["dataset"])
    settings = TrainSettings(**result["settings"]).validate()
    folds = make_folds(dataset.n_rows, dataset.labels, settings.seed)
    fold = folds[result["fold"]]
    # Rebuild the trained model deterministically, then overwrite with the
    # checkpoint (guards against any environment drift).
    run = train_on_fold(config, dataset, fold, settings)
    run.model.load_state(load_checkpoint(checkpoint_dir))
    report = gate_report_for_run(run, dataset)
    report.baseline_holdout_auroc = result["holdout_auroc"]
    out_dir = Path(args.gates_out) if args.gates_out else run_dir
    write_gate_report(report, out_dir / "gates.csv", out_dir / "gates.json")
    print(f"gate report -> {out_dir / 'gates.csv'}")
    print(f"drop candidates: {report.drop_candidates or 'none'}")
    if args.apply_drops:
        _, comparison = suggest_and_apply_drops(report, dataset)
        atomic_write_text(
            out_dir / "drops.json", json.dumps(comparison.to_json_dict(), indent=1, sort_keys=True)
        )
        print(
            f"refit after drops: before={comparison.before_holdout_auroc} "
            f"after={comparison.after_holdout_auroc}"
        )
    return 0


def cmd_make_data(args) -> int:
    target = Path(args.data_dir)
    written = write_datasets(target)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabgate", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p):
        p.add_argument("--dataset", help="registry dataset name")
        p.add_argument("--csv", help="path to a CSV file (with --label)")
        p.add_argument("--label", help="label column for --csv")
        p.add_argument("--positive-class", dest="positive_class")
        p.add_argument("--registry", help="registry JSON path")
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--ghost-size", dest="ghost_size", type=int)
        p.add_argument("--out", help="output root (default $TABGATE_OUT or ./runs)")

    def add_config_args(p):
        p.add_argument("--family", choices=FAMILIES)
        p.add_argument("--config", help="ModelConfig JSON file")
        p.add_argument("--mlp-layers", dest="mlp_layers")
        p.add_argument("--dropout", type=float)
        p.add_argument("--embedding-size", dest="embedding_size", type=int)
        p.add_argument("--product-type", dest="product_type")
        p.add_argument("--product-out", dest="product_out", type=int)
        p.add_argument("--attn-layers", dest="attn_layers", type=int)
        p.add_argument("--attn-heads", dest="attn_heads", type=int)
        p.add_argument("--attn-dropout", dest="attn_dropout", type=float)
        p.add_argument("--attn-activation", dest="attn_activation")
        p.add_argument("--no-attn-residual", dest="no_attn_residual", action="store_true")
        p.add_argument("--no-skip", dest="no_skip", action="store_true")
        p.add_argument("--no-gate", dest="no_gate", action="store_true")
        p.add_argument("--raw-numeric-input", dest="raw_numeric_input", action="store_true")

    def add_train_args(p):
        p.add_argument("--lr", type=float, default=0.01)
        p.add_argument("--lr-step", dest="lr_step", type=int, default=15)
        p.add_argument("--max-epochs", dest="max_epochs", type=int, default=200)

    p_train = sub.add_parser("train", help="fit one configuration on one fold")
    add_data_args(p_train)
    add_config_args(p_train)
    add_train_args(p_train)
    p_train.add_argument("--fold", type=int, default=0)
    p_train.add_argument("--seed", type=int)
    p_train.set_defaults(func=cmd_train)

    p_hpo = sub.add_parser("hpo", help="hyperparameter search (20 trials per study)")
    add_data_args(p_hpo)
    p_hpo.add_argument("--family", choices=FAMILIES)
    p_hpo.add_argument("--folds", default="0", help="'all' or comma list")
    p_hpo.add_argument("--seeds", help="comma list, default 20210")
    p_hpo.add_argument("--trials", type=int, default=20)
    p_hpo.add_argument("--sampler", choices=("random", "surrogate"), default="random")
    p_hpo.add_argument("--jobs", type=int, default=1)
    p_hpo.add_argument("--resume", action="store_true")
    p_hpo.add_argument("--raw-numeric-input", dest="raw_numeric_input", action="store_true")
    p_hpo.set_defaults(func=cmd_hpo)

    p_ablate = sub.add_parser("ablate", help="run skip/gate ablation scenarios")
    add_data_args(p_ablate)
    add_config_args(p_ablate)
    add_train_args(p_ablate)
    p_ablate.add_argument("--folds", default="all")
    p_ablate.add_argument("--seeds", help="comma list, default 20210,20211")
    p_ablate.add_argument("--jobs", type=int, default=1)
    p_ablate.set_defaults(func=cmd_ablate)

    p_gates = sub.add_parser("inspect-gates", help="gate passage report for a run")
    add_data_args(p_gates)
    p_gates.add_argument("--run", required=True, help="run directory from 'train'")
    p_gates.add_argument("--apply-drops", dest="apply_drops", action="store_true")
    p_gates.add_argument("--gates-out", dest="gates_out")
    p_gates.set_defaults(func=cmd_inspect_gates)

    p_data = sub.add_parser("make-data", help="write bundled stand-in datasets + registry")
    p_data.add_argument("--data-dir", dest="data_dir", default="data")
    p_data.set_defaults(func=cmd_make_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataError, GateAnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StudyError, RuntimeError, OSError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
