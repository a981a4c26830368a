"""CSV ingestion, schema inference, fold splitting, and batch encoding.

Protocol notes:
  * A column whose non-missing cells all parse as floats is numeric; anything
    else is categorical. Empty cells are missing. Constant columns are
    dropped at load time with a logged notice.
  * Schemas used for modeling are fitted on the train fold only: numeric
    mean/std and categorical vocabularies come from train rows. Every
    categorical vocabulary ends with a sentinel slot that absorbs missing
    cells and categories unseen at fit time.
  * Folds: rows are shuffled once with xoshiro256**(seed); the five
    contiguous 20% blocks are the holdouts; of the remaining rows the first
    floor(0.65 n) are train and the rest validation. No stratification.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import shuffled_indices

log = logging.getLogger(__name__)

MISSING_SENTINEL = "__missing__"

# Per-dataset batch and ghost-batch sizes for the benchmark suite.
DATASET_SIZES = {
    "albert": (2048, 64),
    "hcdr_main": (1024, 128),
    "dota2games": (1024, 256),
    "bank_marketing": (2048, 16),
    "adult": (2048, 32),
    "1995_income": (2048, 8),
    "online_shoppers": (2048, 8),
    "shrutime": (2048, 8),
    "blastchar": (2047, 8),
    "philippine": (512, 8),
    "insurance_co": (1024, 8),
    "spambase": (1024, 8),
    "jasmine": (512, 8),
    "seismicbumps": (2048, 8),
    "qsar_bio": (2048, 8),
}


class DataError(ValueError):
    pass


@dataclass
class FieldSchema:
    name: str
    kind: str  # "categorical" | "numeric"
    categories: tuple[str, ...] = ()  # ends with MISSING_SENTINEL
    mean: float = 0.0
    std: float = 1.0
    _code_map: dict = field(default_factory=dict, repr=False)

    @property
    def cardinality(self) -> int:
        return len(self.categories)

    def code_for(self, raw: str) -> int:
        if not self._code_map:
            self._code_map.update({c: i for i, c in enumerate(self.categories)})
        return self._code_map.get(raw, self.cardinality - 1)


@dataclass
class FeatureSchema:
    fields: list[FieldSchema]
    label_name: str
    positive_class: str

    @property
    def categorical_fields(self) -> list[FieldSchema]:
        return [f for f in self.fields if f.kind == "categorical"]

    @property
    def numeric_fields(self) -> list[FieldSchema]:
        return [f for f in self.fields if f.kind == "numeric"]

    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]


@dataclass
class Dataset:
    """Immutable column-typed table with binary labels."""

    name: str
    column_names: list[str]  # feature columns, constant columns already removed
    column_kinds: dict[str, str]
    numeric_columns: dict[str, np.ndarray]  # float64 with NaN for missing
    categorical_columns: dict[str, list[str]]  # raw strings, "" for missing
    labels: np.ndarray  # int64 of 0/1
    label_name: str
    positive_class: str
    dropped_columns: list[str]

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return len(self.column_names)

    @property
    def positive_fraction(self) -> float:
        return float(self.labels.mean())

    def drop_columns(self, names: list[str]) -> "Dataset":
        names = set(names)
        keep = [c for c in self.column_names if c not in names]
        if not keep:
            raise DataError("dropping these columns would leave zero feature columns")
        return Dataset(
            name=self.name,
            column_names=keep,
            column_kinds={c: self.column_kinds[c] for c in keep},
            numeric_columns={c: v for c, v in self.numeric_columns.items() if c in keep},
            categorical_columns={c: v for c, v in self.categorical_columns.items() if c in keep},
            labels=self.labels,
            label_name=self.label_name,
            positive_class=self.positive_class,
            dropped_columns=self.dropped_columns + sorted(names),
        )


@dataclass
class FoldSplit:
    seed: int
    fold: int
    train_ids: np.ndarray
    validation_ids: np.ndarray
    holdout_ids: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "fold": self.fold,
            "train": self.train_ids.tolist(),
            "validation": self.validation_ids.tolist(),
            "holdout": self.holdout_ids.tolist(),
        }


def _parse_float(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, label_column: str, positive_class=None, name: str | None = None) -> tuple[FeatureSchema, Dataset]:
    """Read an RFC-4180 CSV with header into a typed Dataset plus a schema
    fitted on all rows (per-fold modeling refits with :func:`fit_schema`)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if not rows:
        raise DataError(f"{path}: no data rows")
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, expected {width}")

    raw_labels = [row[label_idx].strip() for row in rows]
    distinct = sorted(set(raw_labels))
    if len(distinct) != 2:
        raise DataError(f"{path}: label {label_column!r} must be binary, found {distinct[:5]}")
    if positive_class is None:
        if distinct == ["0", "1"]:
            positive_class = "1"
        else:
            raise DataError(
                f"{path}: label values {distinct} are not 0/1; pass positive_class explicitly"
            )
    positive_class = str(positive_class)
    if positive_class not in distinct:
        raise DataError(f"{path}: positive class {positive_class!r} not among labels {distinct}")
    labels = np.asarray([1 if v == positive_class else 0 for v in raw_labels], dtype=np.int64)

    column_names: list[str] = []
    column_kinds: dict[str, str] = {}
    numeric_columns: dict[str, np.ndarray] = {}
    categorical_columns: dict[str, list[str]] = {}
    dropped: list[str] = []
    for j, col in enumerate(header):
        if j == label_idx:
            continue
        cells = [row[j].strip() for row in rows]
        non_missing = [c for c in cells if c != ""]
        parsed = [_parse_float(c) for c in non_missing]
        is_numeric = len(non_missing) > 0 and all(v is not None for v in parsed)
        if len(set(non_missing)) <= 1:
            # Covers all-constant and all-missing columns alike.
            dropped.append(col)
            log.info("dropping constant column %r", col)
            continue
        if is_numeric:
            values = np.asarray([_parse_float(c) if c != "" else math.nan for c in cells])
            column_kinds[col] = "numeric"
            numeric_columns[col] = values
        else:
            column_kinds[col] = "categorical"
            categorical_columns[col] = cells
        column_names.append(col)
    if not column_names:
        raise DataError(f"{path}: no usable feature columns")

    dataset = Dataset(
        name=name or path.stem,
        column_names=column_names,
        column_kinds=column_kinds,
        numeric_columns=numeric_columns,
        categorical_columns=categorical_columns,
        labels=labels,
        label_name=label_column,
        positive_class=positive_class,
        dropped_columns=dropped,
    )
    schema = fit_schema(dataset, np.arange(dataset.n_rows))
    return schema, dataset


def fit_schema(dataset: Dataset, row_ids: np.ndarray) -> FeatureSchema:
    """Fit per-column statistics and vocabularies on the given rows only."""
    row_ids = np.asarray(row_ids)
    fields: list[FieldSchema] = []
    for col in dataset.column_names:
        if dataset.column_kinds[col] == "numeric":
            values = dataset.numeric_columns[col][row_ids]
            seen = values[~np.isnan(values)]
            mean = float(seen.mean()) if seen.size else 0.0
            std = float(seen.std()) if seen.size else 1.0
            if std == 0.0:
                std = 1.0  # constant on this fold; load_csv drops globally constant columns
            fields.append(FieldSchema(name=col, kind="numeric", mean=mean, std=std))
        else:
            cells = dataset.categorical_columns[col]
            seen = sorted({cells[i] for i in row_ids if cells[i] != ""})
            categories = tuple(seen) + (MISSING_SENTINEL,)
            fields.append(FieldSchema(name=col, kind="categorical", categories=categories))
    return FeatureSchema(
        fields=fields,
        label_name=dataset.label_name,
        positive_class=dataset.positive_class,
    )


@dataclass
class EncodedBatch:
    cat_codes: np.ndarray  # int64 [rows, n_categorical_fields]
    numerics: np.ndarray  # float64 [rows, n_numeric_fields], standardized
    labels: np.ndarray  # int64 [rows]

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray) -> "EncodedBatch":
        return EncodedBatch(self.cat_codes[idx], self.numerics[idx], self.labels[idx])


def encode_batch(schema: FeatureSchema, dataset: Dataset, row_ids: np.ndarray) -> EncodedBatch:
    """Standardize numerics with schema stats and map categories to codes.

    Missing numerics become the schema mean (z-score 0); missing or unseen
    categories map to the sentinel code.
    """
    row_ids = np.asarray(row_ids)
    cat_fields = schema.categorical_fields
    num_fields = schema.numeric_fields
    cat_codes = np.zeros((len(row_ids), len(cat_fields)), dtype=np.int64)
    numerics = np.zeros((len(row_ids), len(num_fields)))
    for k, f in enumerate(cat_fields):
        cells = dataset.categorical_columns[f.name]
        cat_codes[:, k] = [f.code_for(cells[i]) if cells[i] != "" else f.cardinality - 1 for i in row_ids]
    for k, f in enumerate(num_fields):
        values = dataset.numeric_columns[f.name][row_ids]
        z = (values - f.mean) / f.std
        numerics[:, k] = np.where(np.isnan(values), 0.0, z)
    return EncodedBatch(cat_codes, numerics, dataset.labels[row_ids])


def make_folds(n_rows: int, labels, seed: int, n_folds: int = 5) -> list[FoldSplit]:
    """Five 65/15/20 train/validation/holdout splits from one seeded shuffle.

    ``labels`` is accepted for interface symmetry but unused: splits are not
    stratified.
    """
    if n_rows < 20:
        raise DataError(f"need at least 20 rows to split, got {n_rows}")
    perm = shuffled_indices(n_rows, seed)
    bounds = [n_rows * k // n_folds for k in range(n_folds + 1)]
    n_train = int(math.floor(0.65 * n_rows))
    folds = []
    for k in range(n_folds):
        lo, hi = bounds[k], bounds[k + 1]
        holdout = perm[lo:hi]
        rest = perm[:lo] + perm[hi:]
        folds.append(
            FoldSplit(
                seed=seed,
                fold=k,
                train_ids=np.asarray(rest[:n_train], dtype=np.int64),
                validation_ids=np.asarray(rest[n_train:], dtype=np.int64),
                holdout_ids=np.asarray(holdout, dtype=np.int64),
            )
        )
    return folds


# dataset registry ---------------------------------------------------------

@dataclass
class RegistryEntry:
    name: str
    path: Path
    label_column: str
    positive_class: str
    batch_size: int
    ghost_batch_size: int


def default_registry_path() -> Path:
    env = os.environ.get("TABGATE_REGISTRY")
    if env:
        return Path(env)
    local = Path("data/registry.json")
    if local.exists():
        return local
    return Path(__file__).resolve().parents[2] / "data" / "registry.json"


def load_registry(path=None) -> dict[str, RegistryEntry]:
    path = Path(path) if path else default_registry_path()
    if not path.exists():
        raise DataError(f"dataset registry not found at {path}")
    raw = json.loads(path.read_text())
    registry = {}
    for name, spec in raw.items():
        csv_path = Path(spec["path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        registry[name] = RegistryEntry(
            name=name,
            path=csv_path,
            label_column=spec["label_column"],
            positive_class=str(spec["positive_class"]),
            batch_size=int(spec["batch_size"]),
            ghost_batch_size=int(spec["ghost_batch_size"]),
        )
    return registry


def load_registered(name: str, registry_path=None) -> tuple[RegistryEntry, FeatureSchema, Dataset]:
    registry = load_registry(registry_path)
    if name not in registry:
        raise DataError(f"dataset {name!r} not in registry; known: {sorted(registry)}")
    entry = registry[name]
    if not entry.path.exists():
        raise DataError(
            f"dataset file {entry.path} missing; bundled stand-ins are created by "
            f"'tabgate make-data', real files are documented in the README"
        )
    schema, dataset = load_csv(entry.path, entry.label_column, entry.positive_class, name=name)
    return entry, schema, dataset
