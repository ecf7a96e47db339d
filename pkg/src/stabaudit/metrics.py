"""Instability metrics over fixed prediction matrices.

Everything here is pure integer-counting arithmetic over score/label arrays:
churn between two models, ambiguity and discrepancy over a model set,
unstable-point sets, and the histogram/threshold summaries used for
plot-ready output. Nothing retrains models; callers supply predictions.

Two churn flavors exist and are never interchanged: `churn` is the label
disagreement rate between two models, while `signed_loss_churn` is the mean
zero-one-loss difference (antisymmetric, needs ground truth). Reports must
label which one they show.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadRowIndexError, LengthMismatchError


@dataclass(frozen=True)
class SmoothChurnParams:
    """Confidence width gamma for the ramp-loss relaxation of churn."""

    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


@dataclass
class PredictionMatrix:
    """m x s scores of m models on a fixed sample, with thresholded labels.

    labels[k, i] = 1{scores[k, i] >= 0.5} always; the label matrix is derived,
    never stored independently, so it cannot drift from the scores.
    """

    scores: np.ndarray
    sample_ids: list
    model_ids: list
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        self.scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("non-finite scores")
        if np.any(self.scores < 0) or np.any(self.scores > 1):
            raise ValueError("scores must lie in [0, 1]")
        m, s = self.scores.shape
        if len(self.sample_ids) != s:
            raise LengthMismatchError(len(self.sample_ids), s)
        if len(self.model_ids) != m:
            raise LengthMismatchError(len(self.model_ids), m)
        self.labels = (self.scores >= 0.5).astype(np.int64)

    @property
    def n_models(self) -> int:
        return self.scores.shape[0]

    @property
    def n_samples(self) -> int:
        return self.scores.shape[1]

    def row(self, model_id) -> int:
        try:
            return self.model_ids.index(model_id)
        except ValueError:
            raise BadRowIndexError(f"no model {model_id!r}") from None

    def with_row(self, score_row: np.ndarray, model_id) -> "PredictionMatrix":
        """A new matrix with one extra model row appended."""
        return PredictionMatrix(
            scores=np.vstack([self.scores, np.atleast_2d(score_row)]),
            sample_ids=list(self.sample_ids),
            model_ids=list(self.model_ids) + [model_id],
        )

    # -- CSV + manifest round trip ------------------------------------------

    def save_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model_id"] + [str(s) for s in self.sample_ids])
            for mid, row in zip(self.model_ids, self.scores):
                writer.writerow([str(mid)] + [repr(float(v)) for v in row])
        manifest = {
            "n_models": self.n_models,
            "n_samples": self.n_samples,
            "model_ids": [str(m) for m in self.model_ids],
        }
        path.with_suffix(".manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=1)
        )

    @classmethod
    def load_csv(cls, path: str | Path) -> "PredictionMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            sample_ids = header[1:]
            model_ids, rows = [], []
            for rec in reader:
                model_ids.append(rec[0])
                rows.append([float(v) for v in rec[1:]])
        return cls(scores=np.array(rows), sample_ids=sample_ids, model_ids=model_ids)


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise LengthMismatchError(a.shape[0], b.shape[0])


# ---------------------------------------------------------------------------
# churn


def churn(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Fraction of the sample on which the two label vectors disagree."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    _check_same_length(labels_a, labels_b)
    if labels_a.size == 0:
        raise LengthMismatchError(0, 0)
    return int(np.count_nonzero(labels_a != labels_b)) / labels_a.size


def churn_unstable_set(labels_a: np.ndarray, labels_b: np.ndarray) -> np.ndarray:
    """Indices whose prediction flips across the update A -> B."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    _check_same_length(labels_a, labels_b)
    return np.flatnonzero(labels_a != labels_b)


def signed_loss_churn(
    scores_a: np.ndarray, scores_b: np.ndarray, y: np.ndarray
) -> float:
    """Mean zero-one-loss difference between A and B; antisymmetric."""
    scores_a = np.asarray(scores_a)
    scores_b = np.asarray(scores_b)
    y = np.asarray(y)
    _check_same_length(scores_a, scores_b)
    _check_same_length(scores_a, y)
    err_a = np.count_nonzero((scores_a >= 0.5).astype(int) != y)
    err_b = np.count_nonzero((scores_b >= 0.5).astype(int) != y)
    return (int(err_a) - int(err_b)) / y.size


def ramp_loss(scores: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    """Per-point ramp loss on the margin (2f-1)(2y-1) in [-1, 1].

    1 below zero margin, linear ramp down to 0 across [0, gamma], 0 above.
    As gamma -> 0 this recovers the zero-one loss except exactly at margin 0.
    """
    margin = (2.0 * np.asarray(scores) - 1.0) * (2.0 * np.asarray(y) - 1.0)
    out = np.zeros_like(margin, dtype=np.float64)
    out[margin < 0] = 1.0
    ramp = (margin >= 0) & (margin <= gamma)
    out[ramp] = 1.0 - margin[ramp] / gamma
    return out


def smooth_churn(
    scores_a: np.ndarray,
    scores_b: np.ndarray,
    y: np.ndarray,
    params: SmoothChurnParams,
) -> float:
    """Mean ramp-loss difference between the two score vectors."""
    scores_a = np.asarray(scores_a)
    scores_b = np.asarray(scores_b)
    y = np.asarray(y)
    _check_same_length(scores_a, scores_b)
    _check_same_length(scores_a, y)
    g = params.gamma
    return float(np.mean(ramp_loss(scores_a, y, g) - ramp_loss(scores_b, y, g)))


# ---------------------------------------------------------------------------
# multiplicity over a prediction matrix


def rashomon_unstable_set(pm: PredictionMatrix) -> np.ndarray:
    """Column indices whose predictions are non-constant across models."""
    lo = pm.labels.min(axis=0)
    hi = pm.labels.max(axis=0)
    return np.flatnonzero(lo != hi)


def empirical_ambiguity(pm: PredictionMatrix) -> float:
    """Fraction of sample columns where some pair of models conflicts."""
    return rashomon_unstable_set(pm).size / pm.n_samples


def baseline_ambiguity(pm: PredictionMatrix, baseline_row_index: int) -> float:
    """Fraction of columns where any model disagrees with the baseline row."""
    _check_row(pm, baseline_row_index)
    base = pm.labels[baseline_row_index]
    conflict = np.any(pm.labels != base, axis=0)
    return int(np.count_nonzero(conflict)) / pm.n_samples


def discrepancy(pm: PredictionMatrix, baseline_row_index: int):
    """Max single-model disagreement rate vs the baseline row.

    Returns (value, model_id of the attaining row); ties resolve to the
    lowest row index.
    """
    _check_row(pm, baseline_row_index)
    base = pm.labels[baseline_row_index]
    rates = np.count_nonzero(pm.labels != base, axis=1) / pm.n_samples
    k = int(np.argmax(rates))
    return float(rates[k]), pm.model_ids[k]


def _check_row(pm: PredictionMatrix, row: int) -> None:
    if not 0 <= row < pm.n_models:
        raise BadRowIndexError(f"row {row} out of range for {pm.n_models} models")


# ---------------------------------------------------------------------------
# unstable-set comparison


@dataclass(frozen=True)
class UnstableSets:
    """The two unstable-point sets over one test sample."""

    rashomon_unstable: np.ndarray
    churn_unstable: np.ndarray
    sample_ids: list


def common_arbitrariness(u_rashomon: np.ndarray, u_churn: np.ndarray) -> float:
    """|U_R intersect U_C| / |U_C|; vacuously 1.0 when no point churned.

    Callers reporting the vacuous case should flag the empty denominator.
    """
    u_churn = np.asarray(u_churn)
    if u_churn.size == 0:
        return 1.0
    common = np.intersect1d(u_rashomon, u_churn).size
    return common / u_churn.size


# ---------------------------------------------------------------------------
# plot-ready summaries


@dataclass(frozen=True)
class FlipBin:
    lo: float
    hi: float
    count: int
    flip_proportion: float
    empty: bool


def probability_flip_bins(
    scores_ref: np.ndarray, unstable: np.ndarray, n_bins: int = 20
) -> list[FlipBin]:
    """Per-bin prediction counts and unstable proportion over [0, 1].

    Bins are uniform; the last bin is closed at 1.0. Empty bins report a
    flip proportion of 0 with the empty flag set.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    scores_ref = np.asarray(scores_ref)
    mask = np.zeros(scores_ref.size, dtype=bool)
    mask[np.asarray(unstable, dtype=np.int64)] = True
    idx = np.minimum((scores_ref * n_bins).astype(int), n_bins - 1)
    bins = []
    for b in range(n_bins):
        in_bin = idx == b
        count = int(np.count_nonzero(in_bin))
        flips = int(np.count_nonzero(in_bin & mask))
        bins.append(
            FlipBin(
                lo=b / n_bins,
                hi=(b + 1) / n_bins,
                count=count,
                flip_proportion=flips / count if count else 0.0,
                empty=count == 0,
            )
        )
    return bins


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    proportion: float
    defined: bool


def uncertainty_threshold_curve(
    uncertainties: np.ndarray, unstable: np.ndarray, thresholds
) -> list[CurvePoint]:
    """Proportion of unstable points with uncertainty >= t, per threshold t.

    Nonincreasing in t. With an empty unstable set every point is emitted
    with defined=False and proportion 0.
    """
    uncertainties = np.asarray(uncertainties)
    unstable = np.asarray(unstable, dtype=np.int64)
    out = []
    if unstable.size == 0:
        return [CurvePoint(float(t), 0.0, False) for t in thresholds]
    u = uncertainties[unstable]
    for t in thresholds:
        prop = int(np.count_nonzero(u >= t)) / u.size
        out.append(CurvePoint(float(t), prop, True))
    return out


def default_uncertainty_thresholds(n: int = 50) -> np.ndarray:
    """Evenly spaced thresholds spanning the p(1-p) range [0, 0.25]."""
    return np.linspace(0.0, 0.25, n)
