"""Constructing sets of near-optimal competing classifiers.

Three routes:

* membership filtering against a baseline (performance within epsilon),
* randomized retraining: m models differing only in seed, filtered by the
  membership inequality,
* constrained candidates: for chosen target examples and probability
  thresholds, solve the constrained ERM that pins the model's probability at
  a target point, then keep near-optimal solutions (convex/logistic only).

Membership is always the inclusive inequality value <= epsilon, where the
value is a gap relative to the baseline (loss or accuracy error) or an
absolute accuracy error, per the configured metric.
"""

from __future__ import annotations

import concurrent.futures
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .data import Dataset
from .errors import EmptyRashomonSetError
from .models import (
    Classifier,
    TrainConfig,
    mean_cross_entropy,
    error_rate,
    load_model,
    model_to_dict,
    model_from_dict,
    save_model,
    train,
)

METRICS = ("loss_gap", "accuracy_error_gap", "absolute_accuracy_error")
RELATIVE_METRICS = ("loss_gap", "accuracy_error_gap")


@dataclass(frozen=True)
class RashomonConfig:
    epsilon: float
    metric: str = "loss_gap"
    m: int = 25
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be > 0")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.seeds and len(self.seeds) != self.m:
            raise ValueError(f"need {self.m} seeds, got {len(self.seeds)}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")


@dataclass(frozen=True)
class CandidateGridConfig:
    """Threshold grid and targets for the constrained-candidate method."""

    thresholds: tuple[float, ...]
    target_examples: tuple[int, ...]
    constraint_tolerance: float = 1e-3
    penalty_init: float = 10.0
    penalty_max: float = 1e4

    def __post_init__(self):
        p = self.thresholds
        if any(not 0.0 < t < 1.0 for t in p):
            raise ValueError("thresholds must lie strictly in (0, 1)")
        if len(set(p)) != len(p) or list(p) != sorted(p):
            raise ValueError("thresholds must be sorted and distinct")
        if self.constraint_tolerance <= 0:
            raise ValueError("constraint_tolerance must be > 0")


@dataclass
class CandidateRecord:
    """Outcome of one constrained solve, kept for provenance."""

    target_index: int
    threshold: float
    violation: float
    penalty_weight: float
    metric_value: float | None
    feasible: bool
    accepted: bool


@dataclass
class RashomonSet:
    members: list
    member_ids: list
    member_metrics: list  # measured metric value per member (gap or absolute)
    config: RashomonConfig
    construction: str  # "randomized" | "constrained_candidate"
    baseline: Classifier | None = None
    rejected: list = field(default_factory=list)  # (member_id, metric value)
    candidate_records: list = field(default_factory=list)

    def __post_init__(self):
        if self.baseline is not None and not self.members:
            raise EmptyRashomonSetError("no member qualified")

    @property
    def size(self) -> int:
        return len(self.members)

    # -- directory serialization ---------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for mid, model in zip(self.member_ids, self.members):
            save_model(model, out_dir / f"member_{mid}.json")
        if self.baseline is not None:
            save_model(self.baseline, out_dir / "baseline.json")
        manifest = {
            "construction": self.construction,
            "config": {
                "epsilon": self.config.epsilon,
                "metric": self.config.metric,
                "m": self.config.m,
                "seeds": list(self.config.seeds),
            },
            "member_ids": [str(m) for m in self.member_ids],
            "member_metrics": [float(v) for v in self.member_metrics],
            "rejected": [[str(i), float(v)] for i, v in self.rejected],
            "has_baseline": self.baseline is not None,
            "candidate_records": [vars(r) for r in self.candidate_records],
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=1)
        )

    @classmethod
    def load(cls, out_dir: str | Path) -> "RashomonSet":
        out_dir = Path(out_dir)
        manifest = json.loads((out_dir / "manifest.json").read_text())
        cfg = manifest["config"]
        config = RashomonConfig(
            epsilon=cfg["epsilon"],
            metric=cfg["metric"],
            m=cfg["m"],
            seeds=tuple(cfg["seeds"]),
        )
        members = [
            load_model(out_dir / f"member_{mid}.json")
            for mid in manifest["member_ids"]
        ]
        baseline = None
        if manifest["has_baseline"]:
            baseline = load_model(out_dir / "baseline.json")
        return cls(
            members=members,
            member_ids=manifest["member_ids"],
            member_metrics=manifest["member_metrics"],
            config=config,
            construction=manifest["construction"],
            baseline=baseline,
            rejected=[(i, v) for i, v in manifest["rejected"]],
            candidate_records=[
                CandidateRecord(**r) for r in manifest["candidate_records"]
            ],
        )

    def verify_members(self, data: Dataset, indices: np.ndarray) -> bool:
        """Re-check the membership inequality for every stored member."""
        return all(
            membership(
                m, self.baseline, self.config.epsilon, self.config.metric,
                data, indices,
            )[0]
            for m in self.members
        )


# ---------------------------------------------------------------------------
# membership


def metric_value(model, baseline, metric: str, data: Dataset, indices) -> float:
    """Measured performance value: a baseline-relative gap or absolute error."""
    X, y = data.X[indices], data.y[indices]
    if metric == "loss_gap":
        if baseline is None:
            raise ValueError("loss_gap needs a baseline")
        return mean_cross_entropy(model, X, y) - mean_cross_entropy(baseline, X, y)
    if metric == "accuracy_error_gap":
        if baseline is None:
            raise ValueError("accuracy_error_gap needs a baseline")
        return error_rate(model, X, y) - error_rate(baseline, X, y)
    if metric == "absolute_accuracy_error":
        return error_rate(model, X, y)
    raise ValueError(f"unknown metric {metric!r}")


def membership(model, baseline, epsilon: float, metric: str, data: Dataset,
               indices) -> tuple[bool, float]:
    """Inclusive membership verdict and the measured metric value."""
    value = metric_value(model, baseline, metric, data, indices)
    return value <= epsilon, value


# ---------------------------------------------------------------------------
# construction


def fit_baseline(data: Dataset, train_indices, config: TrainConfig) -> Classifier:
    """The empirical-risk-minimizing anchor all membership tests refer to."""
    return train(data, train_indices, config)


def empirical_rashomon(
    data: Dataset,
    train_indices,
    config: RashomonConfig,
    train_config: TrainConfig,
    baseline=None,
    trainer=train,
    jobs: int = 1,
) -> RashomonSet:
    """Randomized retraining: m models differing only in seed, then filter.

    With a baseline, membership is the configured gap metric; without one
    the metric must be absolute. Rejected models are counted, not kept.
    ``trainer`` may be swapped to train uncertainty-aware members.
    """
    seeds = config.seeds or tuple(range(config.m))
    if config.metric in RELATIVE_METRICS and baseline is None:
        raise ValueError(f"metric {config.metric} requires a baseline")

    def job(seed):
        return trainer(data, train_indices, train_config.with_seed(seed))

    models = run_keyed_jobs({s: (lambda s=s: job(s)) for s in seeds}, workers=jobs)

    members, member_ids, member_metrics, rejected = [], [], [], []
    for seed in seeds:
        model = models[seed]
        ok, value = membership(
            model, baseline, config.epsilon, config.metric, data, train_indices
        )
        if ok:
            members.append(model)
            member_ids.append(str(seed))
            member_metrics.append(value)
        else:
            rejected.append((str(seed), value))
    if not members:
        raise EmptyRashomonSetError(
            f"0 of {len(seeds)} sampled models within epsilon={config.epsilon}"
        )
    return RashomonSet(
        members=members,
        member_ids=member_ids,
        member_metrics=member_metrics,
        config=config,
        construction="randomized",
        baseline=baseline,
        rejected=rejected,
    )


def most_contestable_indices(model, data: Dataset, indices, k: int) -> np.ndarray:
    """The k points among ``indices`` whose scores sit nearest 0.5."""
    indices = np.asarray(indices)
    scores = model.score(data.X[indices])
    order = np.argsort(np.abs(scores - 0.5), kind="stable")
    return indices[order[:k]]


def constrained_candidates(
    data: Dataset,
    train_indices,
    baseline: Classifier,
    grid: CandidateGridConfig,
    epsilon: float,
    l2_penalty: float | None = None,
) -> RashomonSet:
    """Constrained-ERM candidates around a logistic baseline.

    For each target example i and threshold p, minimizes the training
    objective subject to the model's probability at x_i being pushed to the
    other side of p (h(x_i) <= p when p is below the baseline's probability,
    h(x_i) >= p when above). The constraint is enforced with a quadratic
    penalty whose weight doubles until the violation fits the tolerance;
    exhausting the schedule records the candidate as infeasible rather than
    raising. Accepted candidates satisfy both the constraint and the
    near-optimality inequality (train loss within epsilon of the baseline).
    """
    if baseline.arch != "logreg":
        raise ValueError("constrained candidates require the logistic architecture")
    X = data.X[train_indices]
    y = data.y[train_indices].astype(np.float64)
    if l2_penalty is None:
        l2_penalty = float(baseline.train_meta.get("l2_penalty", 0.0))
    w0 = baseline.params["w"]
    base_loss = mean_cross_entropy(baseline, X, y)
    base_scores = baseline.score(data.X)

    members, member_ids, member_metrics = [], [], []
    rejected, records = [], []
    tol = grid.constraint_tolerance

    for i in grid.target_examples:
        x_i = data.X[int(i)]
        for p in grid.thresholds:
            h0 = float(base_scores[int(i)])
            if p == h0:
                # constraint already satisfied by the baseline; candidate is h0
                records.append(CandidateRecord(int(i), p, 0.0, 0.0, 0.0, True, True))
                members.append(Classifier("logreg", {"w": w0.copy()}))
                member_ids.append(f"i{i}_p{p:g}")
                member_metrics.append(0.0)
                continue
            sign = 1.0 if p < h0 else -1.0  # sign * (h(x_i) - p) <= 0 required

            def objective(w, mu):
                z = X @ w
                ce = float(np.mean(np.logaddexp(0.0, z) - y * z))
                obj = ce + l2_penalty * float(w @ w)
                g = X.T @ (expit(z) - y) / X.shape[0] + 2.0 * l2_penalty * w
                s = float(expit(w @ x_i))
                viol = sign * (s - p)
                if viol > 0:
                    obj += mu * viol * viol
                    g = g + (2.0 * mu * viol * sign * s * (1.0 - s)) * x_i
                return obj, g

            w = w0.copy()
            mu = grid.penalty_init
            feasible = False
            while True:
                res = minimize(
                    objective, w, args=(mu,), jac=True, method="L-BFGS-B",
                    options={"maxiter": 200},
                )
                w = res.x
                viol = max(0.0, sign * (float(expit(w @ x_i)) - p))
                if viol <= tol:
                    feasible = True
                    break
                mu *= 2.0
                if mu > grid.penalty_max:
                    break

            cand_id = f"i{i}_p{p:g}"
            if not feasible:
                records.append(
                    CandidateRecord(int(i), p, viol, mu / 2.0, None, False, False)
                )
                continue
            cand = Classifier("logreg", {"w": w})
            gap = mean_cross_entropy(cand, X, y) - base_loss
            accepted = gap <= epsilon
            records.append(CandidateRecord(int(i), p, viol, mu, gap, True, accepted))
            if accepted:
                members.append(cand)
                member_ids.append(cand_id)
                member_metrics.append(gap)
            else:
                rejected.append((cand_id, gap))

    if not members:
        raise EmptyRashomonSetError("all candidates infeasible or filtered out")
    config = RashomonConfig(
        epsilon=epsilon, metric="loss_gap", m=max(1, len(members)),
        seeds=(),
    )
    return RashomonSet(
        members=members,
        member_ids=member_ids,
        member_metrics=member_metrics,
        config=config,
        construction="constrained_candidate",
        baseline=baseline,
        rejected=rejected,
        candidate_records=records,
    )


# ---------------------------------------------------------------------------
# parallel job helper


def run_keyed_jobs(jobs: dict, workers: int = 1) -> dict:
    """Run keyed thunks, aggregating results in sorted-key order.

    Execution may be concurrent; aggregation order never depends on
    completion order, so results are deterministic for deterministic jobs.
    """
    if workers <= 1:
        results = {k: fn() for k, fn in jobs.items()}
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(fn) for k, fn in jobs.items()}
            results = {k: f.result() for k, f in futures.items()}
    return {k: results[k] for k in sorted(results, key=str)}
