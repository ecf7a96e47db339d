"""Tabular ingestion, featurization, splits, and update-regime subsampling.

The featurization pipeline is deliberately boring and fully deterministic:
categorical columns are one-hot encoded (first category dropped, so the
encoding stays linearly independent of the intercept), numeric columns are
standardized with statistics computed on the training split only, and an
intercept column of ones is prepended. Everything is a pure function of its
arguments, including seeds, so a pipeline config reproduces X, y, and every
index set byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSplitError,
    MissingTargetError,
    NonBinaryTargetError,
    RaggedRowError,
)

PRNG_NAME = "numpy:PCG64"

# Cell values treated as missing in both numeric and categorical columns.
DEFAULT_MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null"})

MISSING_CATEGORY = "(missing)"


@dataclass(frozen=True)
class SchemaConfig:
    """Column typing and label mapping for a raw CSV.

    Columns not listed in either set are type-inferred: numeric if every
    non-missing cell parses as a float, categorical otherwise.
    ``positive_label`` picks which raw target value maps to 1; by default the
    lexicographically larger of the two values is positive.
    """

    categorical_columns: tuple[str, ...] = ()
    numeric_columns: tuple[str, ...] = ()
    positive_label: str | None = None
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS


@dataclass
class RawTable:
    """A parsed CSV: string cells, a header, and a validated binary target."""

    rows: list[list[str]]
    header: list[str]
    target_column: str
    label_mapping: dict[str, int]
    schema: SchemaConfig
    source: str
    n_dropped_missing_target: int = 0

    @property
    def n(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        j = self.header.index(name)
        return [r[j] for r in self.rows]


@dataclass
class Dataset:
    """Featurized design matrix with intercept column and binary labels."""

    X: np.ndarray  # n x (d+1), X[:, 0] == 1
    y: np.ndarray  # n, values in {0, 1}
    feature_names: list[str]  # length d+1, first entry "intercept"
    provenance: dict

    def __post_init__(self):
        if not np.all(np.isfinite(self.X)):
            raise ValueError("non-finite entries in X")
        if not np.all(self.X[:, 0] == 1.0):
            raise ValueError("first column of X must be constant 1")
        if not np.all(np.isin(self.y, (0, 1))):
            raise ValueError("y must contain only 0 and 1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        """Number of engineered features, excluding the intercept."""
        return self.X.shape[1] - 1

    def save(self, path: str | Path) -> None:
        """Cache to a compressed columnar .npz keyed by preprocessing hash."""
        np.savez_compressed(
            path,
            X=self.X,
            y=self.y,
            feature_names=np.array(self.feature_names, dtype=object),
            provenance=np.array([json.dumps(self.provenance, sort_keys=True)]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        with np.load(path, allow_pickle=True) as z:
            return cls(
                X=z["X"],
                y=z["y"],
                feature_names=[str(s) for s in z["feature_names"]],
                provenance=json.loads(str(z["provenance"][0])),
            )


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/test index sets, a pure function of (n, fraction, seed)."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    test_fraction: float

    def __post_init__(self):
        overlap = np.intersect1d(self.train_indices, self.test_indices)
        if overlap.size:
            raise ValueError(f"train/test overlap at indices {overlap[:5]}")


@dataclass(frozen=True)
class UpdateRegime:
    """A data-update perturbation: retrain on a seeded fraction of train.

    The two conventional regimes are a large update (model A sees half the
    training data) and a small update (model A sees 95% of it).
    """

    kind: str  # "large" or "small", or any label
    fraction: float
    seed: int

    LARGE_FRACTION = 0.5
    SMALL_FRACTION = 0.95

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")

    @classmethod
    def large(cls, seed: int, fraction: float = LARGE_FRACTION) -> "UpdateRegime":
        return cls("large", fraction, seed)

    @classmethod
    def small(cls, seed: int, fraction: float = SMALL_FRACTION) -> "UpdateRegime":
        return cls("small", fraction, seed)


# ---------------------------------------------------------------------------
# CSV ingestion


def load_csv(
    path: str | Path,
    target_column: str,
    schema: SchemaConfig | None = None,
) -> RawTable:
    """Parse an RFC-4180 CSV with header into a validated RawTable.

    Rows whose target cell is missing are dropped (counted in the table).
    The label mapping (raw value -> {0,1}) is recorded on the table.
    """
    schema = schema or SchemaConfig()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingTargetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise MissingTargetError(
                f"target column {target_column!r} not in header {header}"
            )
        t_idx = header.index(target_column)
        rows: list[list[str]] = []
        dropped = 0
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise RaggedRowError(i, len(header), len(row))
            row = [c.strip() for c in row]
            if row[t_idx] in schema.missing_tokens:
                dropped += 1
                continue
            rows.append(row)

    values = sorted({r[t_idx] for r in rows})
    if len(values) != 2:
        raise NonBinaryTargetError(values)
    positive = schema.positive_label
    if positive is None:
        positive = values[1]
    elif positive not in values:
        raise NonBinaryTargetError(values)
    mapping = {v: int(v == positive) for v in values}

    return RawTable(
        rows=rows,
        header=header,
        target_column=target_column,
        label_mapping=mapping,
        schema=schema,
        source=str(path),
        n_dropped_missing_target=dropped,
    )


def _is_numeric_column(cells: list[str], missing: frozenset[str]) -> bool:
    seen_value = False
    for c in cells:
        if c in missing:
            continue
        seen_value = True
        try:
            float(c)
        except ValueError:
            return False
    return seen_value


def _sha256_of_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def featurize(raw: RawTable, split: SplitSpec | None = None) -> Dataset:
    """One-hot encode categoricals, standardize numerics, prepend intercept.

    When a split is supplied, numeric means/stds and imputation medians come
    from the train rows only; test rows are transformed with those train
    statistics. Constant columns (zero train variance, or a single category)
    are dropped with a warning and recorded in provenance.
    """
    schema = raw.schema
    missing = schema.missing_tokens
    feature_cols = [c for c in raw.header if c != raw.target_column]
    t_idx = raw.header.index(raw.target_column)

    y = np.array([raw.label_mapping[r[t_idx]] for r in raw.rows], dtype=np.int64)

    if split is not None:
        stat_rows = np.zeros(raw.n, dtype=bool)
        stat_rows[split.train_indices] = True
    else:
        stat_rows = np.ones(raw.n, dtype=bool)

    blocks: list[np.ndarray] = []
    names: list[str] = []
    dropped_constant: list[str] = []

    for col in feature_cols:
        cells = raw.column(col)
        if col in schema.numeric_columns:
            numeric = True
        elif col in schema.categorical_columns:
            numeric = False
        else:
            numeric = _is_numeric_column(cells, missing)

        if numeric:
            vals = np.array(
                [float(c) if c not in missing else np.nan for c in cells]
            )
            train_vals = vals[stat_rows]
            if np.all(np.isnan(train_vals)):
                dropped_constant.append(col)
                warnings.warn(f"dropping all-missing numeric column {col!r}")
                continue
            median = float(np.nanmedian(train_vals))
            vals = np.where(np.isnan(vals), median, vals)
            mean = float(np.mean(vals[stat_rows]))
            std = float(np.std(vals[stat_rows]))  # population std
            if std == 0.0:
                dropped_constant.append(col)
                warnings.warn(f"dropping constant numeric column {col!r}")
                continue
            blocks.append(((vals - mean) / std)[:, None])
            names.append(col)
        else:
            cats = [c if c not in missing else MISSING_CATEGORY for c in cells]
            train_levels = sorted({c for c, keep in zip(cats, stat_rows) if keep})
            if len(train_levels) <= 1:
                dropped_constant.append(col)
                warnings.warn(f"dropping constant categorical column {col!r}")
                continue
            # drop-first encoding; categories unseen in train encode as all
            # zeros. The reference level is the first real category so an
            # explicit missing level keeps its own indicator.
            reference = next(
                (lv for lv in train_levels if lv != MISSING_CATEGORY),
                train_levels[0],
            )
            kept = [lv for lv in train_levels if lv != reference]
            level_pos = {lv: k for k, lv in enumerate(kept)}
            onehot = np.zeros((raw.n, len(kept)))
            for i, c in enumerate(cats):
                k = level_pos.get(c)
                if k is not None:
                    onehot[i, k] = 1.0
            blocks.append(onehot)
            names.extend(f"{col}={lv}" for lv in kept)

    X = np.hstack([np.ones((raw.n, 1))] + blocks)
    feature_names = ["intercept"] + names

    fingerprint = json.dumps(
        {
            "source": raw.source,
            "target": raw.target_column,
            "label_mapping": raw.label_mapping,
            "categorical": sorted(schema.categorical_columns),
            "numeric": sorted(schema.numeric_columns),
            "positive_label": schema.positive_label,
            "split_seed": None if split is None else split.seed,
            "test_fraction": None if split is None else split.test_fraction,
            "feature_names": feature_names,
        },
        sort_keys=True,
    )
    provenance = {
        "source": raw.source,
        "target_column": raw.target_column,
        "label_mapping": raw.label_mapping,
        "n_dropped_missing_target": raw.n_dropped_missing_target,
        "dropped_constant_columns": dropped_constant,
        "prng": PRNG_NAME,
        "numpy_version": np.__version__,
        "preprocessing_hash": _sha256_of_text(fingerprint),
    }
    return Dataset(X=X, y=y, feature_names=feature_names, provenance=provenance)


# ---------------------------------------------------------------------------
# splits and regimes


def make_split(n: int, test_fraction: float, seed: int) -> SplitSpec:
    """Deterministic disjoint exhaustive train/test split of range(n)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(n * test_fraction)
    if n_test == 0 or n_test == n:
        raise DegenerateSplitError(
            f"n={n}, test_fraction={test_fraction} leaves an empty side"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return SplitSpec(
        train_indices=train, test_indices=test, seed=seed, test_fraction=test_fraction
    )


def subsample_for_regime(split: SplitSpec, regime: UpdateRegime) -> np.ndarray:
    """Seeded floor(fraction * |train|) indices drawn without replacement.

    fraction == 1.0 returns the train indices unchanged.
    """
    train = split.train_indices
    if regime.fraction == 1.0:
        return train.copy()
    k = int(np.floor(regime.fraction * train.size))
    rng = np.random.default_rng(regime.seed)
    return np.sort(rng.choice(train, size=k, replace=False))
