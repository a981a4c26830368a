"""Search-space exactness, sampler determinism, study protocol, aggregation."""

import math

import numpy as np
import pytest

from tabgate.data import make_folds
from tabgate.hpo import (
    StudyError,
    TrialRecord,
    aggregate_results,
    point_to_config,
    read_trials_jsonl,
    run_study,
    sample_indices,
    search_space,
    summary_csv_text,
    write_trials_jsonl,
)
from tabgate.models import (
    ATTN_ACTIVATION_OPTIONS,
    DROPOUT_OPTIONS,
    EMBED_SIZE_OPTIONS,
    LR_OPTIONS,
    MLP_LAYER_OPTIONS,
)
from test_training import toy_dataset


def test_space_sizes():
    assert search_space("mlp-plus").size == 144
    assert search_space("pnn").size == 144 * 12
    assert search_space("autoint").size == 144 * 96


def test_every_grid_point_is_in_axes():
    for family in ("mlp-plus", "pnn", "autoint"):
        space = search_space(family)
        step = max(1, space.size // 500)  # sample the grid evenly, ends included
        for index in list(range(0, space.size, step)) + [space.size - 1]:
            point = space.point_at(index)
            for name, options in space.axes:
                assert point[name] in options, (family, name)
            assert space.index_of(point) == index


def test_exhaustive_membership_for_mlp_plus():
    space = search_space("mlp-plus")
    seen = set()
    for index in range(space.size):
        point = space.point_at(index)
        assert point["mlp_layers"] in MLP_LAYER_OPTIONS
        assert point["dropout"] in DROPOUT_OPTIONS
        assert point["lr"] in LR_OPTIONS
        seen.add(tuple(sorted((k, str(v)) for k, v in point.items())))
    assert len(seen) == 144


def test_sampler_deterministic_and_without_replacement():
    space = search_space("autoint")
    a = sample_indices(space, 20, seed=20210)
    b = sample_indices(space, 20, seed=20210)
    c = sample_indices(space, 20, seed=20211)
    assert a == b
    assert a != c
    assert len(set(a)) == 20
    points = [space.point_at(i) for i in a]
    for p in points:
        assert p["embedding_size"] in EMBED_SIZE_OPTIONS
        assert p["attn_activation"] in ATTN_ACTIVATION_OPTIONS


def test_point_to_config_strips_training_axes():
    space = search_space("pnn")
    point = space.point_at(17)
    cfg = point_to_config("pnn", point)
    assert cfg.product_type == point["product_type"]
    assert cfg.dropout == point["dropout"]


def small_study(n_trials=4, seed=20210, jobs=1, sampler="random"):
    ds = toy_dataset(n=100, seed=2)
    fold = make_folds(ds.n_rows, ds.labels, seed)[0]
    return run_study(
        "mlp-plus",
        ds,
        fold,
        batch_size=64,
        ghost_size=8,
        n_trials=n_trials,
        seed=seed,
        sampler=sampler,
        jobs=jobs,
    )


def test_study_produces_one_record_per_trial():
    study = small_study(n_trials=4)
    assert len(study.records) == 4
    assert [r.trial for r in study.records] == [0, 1, 2, 3]
    assert study.best.val_auroc == max(r.val_auroc for r in study.records if r.status == "ok")


def test_study_determinism():
    s1 = small_study(n_trials=3)
    s2 = small_study(n_trials=3)
    assert [r.point for r in s1.records] == [r.point for r in s2.records]
    assert [r.holdout_auroc for r in s1.records] == [r.holdout_auroc for r in s2.records]


def test_study_resume_skips_completed_trials(tmp_path):
    s1 = small_study(n_trials=4)
    partial = s1.records[:2]
    path = tmp_path / "trials.jsonl"
    write_trials_jsonl(path, partial)
    loaded = read_trials_jsonl(path)
    assert [r.trial for r in loaded] == [0, 1]
    ds = toy_dataset(n=100, seed=2)
    fold = make_folds(ds.n_rows, ds.labels, 20210)[0]
    resumed = run_study(
        "mlp-plus", ds, fold, 64, 8, n_trials=4, seed=20210, existing=loaded
    )
    assert [r.holdout_auroc for r in resumed.records] == [r.holdout_auroc for r in s1.records]


def test_surrogate_sampler_stays_on_grid():
    study = small_study(n_trials=4, sampler="surrogate")
    space = search_space("mlp-plus")
    for r in study.records:
        space.index_of(r.point)  # raises if off-grid


def test_best_selection_uses_validation_not_holdout():
    study = small_study(n_trials=4)
    by_val = max((r for r in study.records if r.status == "ok"), key=lambda r: r.val_auroc)
    assert study.best.trial == by_val.trial


def test_trial_jsonl_roundtrip(tmp_path):
    study = small_study(n_trials=3)
    path = tmp_path / "trials.jsonl"
    write_trials_jsonl(path, study.records)
    loaded = read_trials_jsonl(path)
    assert [r.to_json_dict() for r in loaded] == [r.to_json_dict() for r in study.records]


# aggregation ----------------------------------------------------------------------

def test_aggregate_scaling_and_rounding():
    out = aggregate_results([{"dataset": "d", "holdout_auroc": 0.924}])
    assert out["datasets"]["d"]["mean_pct"] == 92.4
    assert out["datasets"]["d"]["sd_pct"] == 0.0


def test_aggregate_mean_and_sd_example():
    out = aggregate_results(
        [{"dataset": "d", "holdout_auroc": 0.92}, {"dataset": "d", "holdout_auroc": 0.94}]
    )
    assert out["datasets"]["d"]["mean_pct"] == 93.0
    assert out["datasets"]["d"]["sd_pct"] == 1.0


def test_aggregate_overall_mean_is_unweighted():
    rows = [
        {"dataset": "a", "holdout_auroc": 0.90},
        {"dataset": "b", "holdout_auroc": 0.80},
        {"dataset": "b", "holdout_auroc": 0.80},
    ]
    out = aggregate_results(rows)
    assert out["mean_pct"] == pytest.approx((90.0 + 80.0) / 2)


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(0)
    rows = [
        {"dataset": f"d{i % 3}", "holdout_auroc": float(rng.random())} for i in range(12)
    ]
    out1 = aggregate_results(rows)
    out2 = aggregate_results(list(reversed(rows)))
    assert out1 == out2


def test_summary_csv_shape():
    agg = aggregate_results([{"dataset": "d", "holdout_auroc": 0.9}])
    text = summary_csv_text({"mlp-plus": agg})
    lines = text.strip().splitlines()
    assert lines[0] == "dataset,mlp-plus_mean_pct,mlp-plus_sd_pct"
    assert lines[1].startswith("d,90.0")
    assert lines[-1].startswith("mean,")


def test_parallel_jobs_match_serial():
    serial = small_study(n_trials=3, jobs=1)
    parallel = small_study(n_trials=3, jobs=2)
    assert [r.holdout_auroc for r in serial.records] == [
        r.holdout_auroc for r in parallel.records
    ]
