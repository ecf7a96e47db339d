"""The end-to-end experiment: train, build Rashomon sets, measure, report.

Stages write their artifacts under the output directory and later stages
read only those artifacts, so any stage can be re-run in isolation:

* ingest     -> dataset.npz, split.json
* models     -> reps/rep<r>/<class>/{b.json, a_<regime>.json, meta.json,
                rashomon/, scores.csv}
* analyze    -> report.json, plots/*.csv

The report is a pure function of the cached predictions plus the config, so
re-running the analyze stage reproduces report.json byte for byte. Wall
times go to a separate timings.json to keep the report deterministic.

Per repetition r (one entry of config.seed_arrays) and model class:
model B trains on the full train set, model A of each regime trains on that
regime's seeded subsample, and the empirical Rashomon set is built by
seed-randomized retraining around the deployed model (model A of the anchor
regime by default). All models score the fixed test sample; every metric
and bound check derives from that prediction matrix.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import synth
from .bounds import (
    beta_closed_form_lr,
    beta_estimate,
    check_bound,
    churn_sum_bound,
    max_feature_norm,
    rashomon_churn_bound,
    smooth_churn_theorem_check,
    StabilityParams,
    zero_churn_diff_test,
)
from .config import (
    ExperimentConfig,
    ModelClassSpec,
    derive_member_seeds,
    regime_subsample_seed,
)
from .data import (
    Dataset,
    SchemaConfig,
    SplitSpec,
    UpdateRegime,
    featurize,
    load_csv,
    make_split,
    subsample_for_regime,
)
from .errors import MissingStageError
from .metrics import (
    PredictionMatrix,
    SmoothChurnParams,
    churn,
    churn_unstable_set,
    common_arbitrariness,
    empirical_ambiguity,
    baseline_ambiguity,
    discrepancy,
    probability_flip_bins,
    rashomon_unstable_set,
    signed_loss_churn,
    smooth_churn,
    uncertainty_threshold_curve,
)
from .models import auc, platt_calibrate, train, train_ua, load_model
from .rashomon import RashomonConfig, RashomonSet, empirical_rashomon

log = logging.getLogger("stabaudit")

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def dataset(self) -> Path:
        return self.root / "dataset.npz"

    @property
    def split(self) -> Path:
        return self.root / "split.json"

    @property
    def resolved_config(self) -> Path:
        return self.root / "resolved_config.json"

    def class_dir(self, rep: int, class_name: str) -> Path:
        return self.root / "reps" / f"rep{rep}" / class_name

    @property
    def report(self) -> Path:
        return self.root / "report.json"

    @property
    def timings(self) -> Path:
        return self.root / "timings.json"

    @property
    def plots(self) -> Path:
        return self.root / "plots"


@dataclass
class StabilityReport:
    doc: dict

    def to_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True, indent=1)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "StabilityReport":
        return cls(doc=json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# stage: ingest


def build_dataset(config: ExperimentConfig) -> tuple[Dataset, SplitSpec, np.ndarray]:
    """Materialize the dataset and split per the config.

    Returns (dataset, split, calibration_indices); the calibration subset is
    carved out of the train side and the remaining train indices are what
    models actually see (split.train_indices minus calibration).
    """
    spec = config.dataset
    if spec.synthetic is not None:
        n = spec.n or (16256 if spec.synthetic == "census" else 30000)
        if spec.synthetic == "census":
            header, rows = synth.generate_census_like(n=n, seed=spec.seed)
            target = synth.CENSUS_TARGET
        else:
            header, rows = synth.generate_credit_like(n=n, seed=spec.seed)
            target = synth.CREDIT_TARGET
        import tempfile

        tmp = Path(tempfile.gettempdir()) / f"stabaudit_{spec.synthetic}_{n}_{spec.seed}.csv"
        synth.write_csv(tmp, header, rows)
        raw = load_csv(tmp, target, SchemaConfig(positive_label=spec.positive_label))
        raw.source = f"synthetic:{spec.synthetic}(n={n}, seed={spec.seed})"
    else:
        schema = SchemaConfig(
            categorical_columns=spec.categorical_columns,
            numeric_columns=spec.numeric_columns,
            positive_label=spec.positive_label,
        )
        raw = load_csv(spec.path, spec.target_column, schema)

    split = make_split(raw.n, config.split_test_fraction, config.split_seed)
    data = featurize(raw, split)

    n_calib = int(config.calibration_fraction * split.train_indices.size)
    rng = np.random.default_rng(
        np.random.SeedSequence([config.split_seed, 7]).generate_state(1)[0]
    )
    perm = rng.permutation(split.train_indices.size)
    calib = np.sort(split.train_indices[perm[:n_calib]])
    return data, split, calib


def stage_ingest(config: ExperimentConfig, paths: RunPaths):
    data, split, calib = build_dataset(config)
    paths.root.mkdir(parents=True, exist_ok=True)
    data.save(paths.dataset)
    model_train = np.setdiff1d(split.train_indices, calib)
    paths.split.write_text(json.dumps({
        "seed": split.seed,
        "test_fraction": split.test_fraction,
        "train_indices": split.train_indices.tolist(),
        "test_indices": split.test_indices.tolist(),
        "calibration_indices": calib.tolist(),
        "model_train_indices": model_train.tolist(),
    }, sort_keys=True))
    paths.resolved_config.write_text(json.dumps({
        "config": config.resolved_dict(),
        "config_hash": config.config_hash(),
    }, sort_keys=True, indent=1))
    return data, split, calib


def load_ingested(paths: RunPaths):
    if not paths.dataset.exists() or not paths.split.exists():
        raise MissingStageError("ingest stage outputs missing; run ingest first")
    data = Dataset.load(paths.dataset)
    sp = json.loads(paths.split.read_text())
    split = SplitSpec(
        train_indices=np.array(sp["train_indices"]),
        test_indices=np.array(sp["test_indices"]),
        seed=sp["seed"],
        test_fraction=sp["test_fraction"],
    )
    calib = np.array(sp["calibration_indices"], dtype=np.int64)
    model_train = np.array(sp["model_train_indices"], dtype=np.int64)
    return data, split, calib, model_train


# ---------------------------------------------------------------------------
# stage: models (train B, per-regime A, rashomon members, predictions)


def _fit_class_model(data, indices, spec: ModelClassSpec, seed: int):
    cfg = spec.train.with_seed(seed)
    if spec.head is not None:
        return train_ua(data, indices, cfg, spec.head)
    return train(data, indices, cfg)


def _maybe_calibrate(model, spec: ModelClassSpec, calib: np.ndarray, data):
    if spec.platt and calib.size and spec.head is None:
        return platt_calibrate(model, calib, data)
    return model


def regime_subsamples(config, model_train: np.ndarray, base_seed: int):
    """The per-regime training subsamples for one repetition."""
    view = SplitSpec(
        train_indices=model_train, test_indices=np.array([], dtype=np.int64),
        seed=base_seed, test_fraction=0.0,
    )
    out = {}
    for k, regime in enumerate(config.regimes):
        sub_seed = regime_subsample_seed(base_seed, k)
        sub = subsample_for_regime(
            view, UpdateRegime(regime.name, regime.fraction, sub_seed)
        )
        out[regime.name] = (sub, sub_seed)
    return out


def run_train_for_class(
    config: ExperimentConfig,
    data: Dataset,
    model_train: np.ndarray,
    spec: ModelClassSpec,
    rep: int,
    out_dir: Path,
) -> None:
    """Train model B and each regime's model A; cache them uncalibrated."""
    from .models import save_model

    base_seed = int(config.seed_arrays[rep][0])
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    model_b = _fit_class_model(data, model_train, spec, base_seed)
    save_model(model_b, out_dir / "b.json")

    regimes_meta = {}
    for regime_name, (sub, sub_seed) in regime_subsamples(
        config, model_train, base_seed
    ).items():
        model_a = _fit_class_model(data, sub, spec, base_seed)
        save_model(model_a, out_dir / f"a_{regime_name}.json")
        regimes_meta[regime_name] = {
            "fraction": next(
                r.fraction for r in config.regimes if r.name == regime_name
            ),
            "subsample_seed": sub_seed,
            "n_subsample": int(sub.size),
        }

    (out_dir / "train_meta.json").write_text(json.dumps({
        "rep": rep,
        "class": spec.name,
        "base_seed": base_seed,
        "regimes": regimes_meta,
        "uncertainty_aware": spec.head is not None,
        "train_seconds": round(time.perf_counter() - t0, 3),
    }, sort_keys=True, indent=1))


def run_rashomon_for_class(
    config: ExperimentConfig,
    data: Dataset,
    model_train: np.ndarray,
    calib: np.ndarray,
    test: np.ndarray,
    spec: ModelClassSpec,
    rep: int,
    out_dir: Path,
) -> None:
    """Build the Rashomon set around the deployed model, then score
    everything (calibrated where configured) on the fixed test sample."""
    if not (out_dir / "train_meta.json").exists():
        raise MissingStageError(f"missing trained models in {out_dir}; run train first")
    train_meta = json.loads((out_dir / "train_meta.json").read_text())
    base_seed = train_meta["base_seed"]

    model_b = load_model(out_dir / "b.json")
    a_models = {
        r.name: load_model(out_dir / f"a_{r.name}.json") for r in config.regimes
    }
    subsamples = {
        name: sub for name, (sub, _) in regime_subsamples(
            config, model_train, base_seed
        ).items()
    }

    if config.rashomon.anchor == "b":
        anchor_model, anchor_indices = model_b, model_train
    else:
        anchor_model = a_models[config.rashomon.anchor]
        anchor_indices = subsamples[config.rashomon.anchor]

    member_seeds = config.rashomon.seeds or derive_member_seeds(
        config.seed_arrays[rep], config.rashomon.m
    )
    trainer = (
        (lambda d, i, c: train_ua(d, i, c, spec.head))
        if spec.head is not None
        else train
    )
    rset = empirical_rashomon(
        data,
        anchor_indices,
        RashomonConfig(
            epsilon=config.rashomon.epsilon,
            metric=config.rashomon.metric,
            m=config.rashomon.m,
            seeds=tuple(member_seeds),
        ),
        spec.train,
        baseline=anchor_model,
        trainer=trainer,
        jobs=config.jobs,
    )
    rset.save(out_dir / "rashomon")

    model_b_cal = _maybe_calibrate(model_b, spec, calib, data)
    a_cal = {n: _maybe_calibrate(m, spec, calib, data) for n, m in a_models.items()}
    members_cal = [_maybe_calibrate(m, spec, calib, data) for m in rset.members]

    X_test = data.X[test]
    rows = [model_b_cal.score(X_test)]
    ids = ["b"]
    for regime in config.regimes:
        rows.append(a_cal[regime.name].score(X_test))
        ids.append(f"a_{regime.name}")
    for mid, m in zip(rset.member_ids, members_cal):
        rows.append(m.score(X_test))
        ids.append(f"m{mid}")
    pm = PredictionMatrix(
        scores=np.vstack(rows), sample_ids=[int(i) for i in test], model_ids=ids
    )
    pm.save_csv(out_dir / "scores.csv")

    meta = dict(train_meta)
    meta.update({
        "anchor": config.rashomon.anchor,
        "member_seeds": [int(s) for s in member_seeds],
        "accepted_members": rset.member_ids,
        "rejected_members": [[i, v] for i, v in rset.rejected],
        "member_train_metrics": [float(v) for v in rset.member_metrics],
        "platt": bool(spec.platt and calib.size and spec.head is None),
        "anchor_train_size": int(anchor_indices.size),
    })
    (out_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))


def _enabled_specs(config) -> list[ModelClassSpec]:
    return [s for s in config.model_classes.values() if s.enabled]


def stage_train(config: ExperimentConfig, paths: RunPaths) -> None:
    data, split, calib, model_train = load_ingested(paths)
    for rep in range(len(config.seed_arrays)):
        for spec in _enabled_specs(config):
            log.info("train stage: rep=%d class=%s", rep, spec.name)
            run_train_for_class(
                config, data, model_train, spec, rep,
                paths.class_dir(rep, spec.name),
            )


def stage_rashomon(config: ExperimentConfig, paths: RunPaths) -> None:
    data, split, calib, model_train = load_ingested(paths)
    for rep in range(len(config.seed_arrays)):
        for spec in _enabled_specs(config):
            log.info("rashomon stage: rep=%d class=%s", rep, spec.name)
            run_rashomon_for_class(
                config, data, model_train, calib, split.test_indices,
                spec, rep, paths.class_dir(rep, spec.name),
            )


# ---------------------------------------------------------------------------
# stage: analyze (metrics + bounds from cached predictions)


def _stats(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "range": [float(arr.min()), float(arr.max())],
        "per_rep": [float(v) for v in arr],
    }


def analyze_class_rep(
    config: ExperimentConfig,
    data: Dataset,
    test: np.ndarray,
    class_dir: Path,
) -> dict:
    """All metrics and exact bound checks for one cached (rep, class)."""
    if not (class_dir / "scores.csv").exists():
        raise MissingStageError(f"missing predictions in {class_dir}; run models stage")
    pm = PredictionMatrix.load_csv(class_dir / "scores.csv")
    meta = json.loads((class_dir / "meta.json").read_text())
    y_test = data.y[test]

    b_row = pm.row("b")
    anchor_id = "b" if meta["anchor"] == "b" else f"a_{meta['anchor']}"
    anchor_row = pm.row(anchor_id)
    member_rows = [i for i, mid in enumerate(pm.model_ids) if mid.startswith("m")]

    labels = pm.labels
    scores = pm.scores
    risks = {
        mid: float(np.mean(labels[i] != y_test)) for i, mid in enumerate(pm.model_ids)
    }
    aucs = {mid: auc(scores[pm.row(mid)], y_test) for mid in pm.model_ids}

    # multiplicity over the member rows only (the sampled empirical set)
    member_matrix = PredictionMatrix(
        scores=scores[member_rows],
        sample_ids=pm.sample_ids,
        model_ids=[pm.model_ids[i] for i in member_rows],
    )
    u_r = rashomon_unstable_set(member_matrix)
    ambiguity = empirical_ambiguity(member_matrix)
    with_anchor = PredictionMatrix(
        scores=np.vstack([scores[anchor_row], scores[member_rows]]),
        sample_ids=pm.sample_ids,
        model_ids=[anchor_id] + [pm.model_ids[i] for i in member_rows],
    )
    base_amb = baseline_ambiguity(with_anchor, 0)
    disc_value, disc_model = discrepancy(with_anchor, 0)

    bounds_reports = []
    member_aucs = [aucs[pm.model_ids[i]] for i in member_rows]

    # corollary: churn(anchor, member) <= 2*risk(anchor) + epsilon, with
    # epsilon measured as the largest member risk excess on this sample
    eps_sample = max(
        [max(0.0, risks[pm.model_ids[i]] - risks[anchor_id]) for i in member_rows],
        default=0.0,
    )
    for i in member_rows:
        mid = pm.model_ids[i]
        c = churn(labels[anchor_row], labels[i])
        bounds_reports.append(
            check_bound(
                c,
                rashomon_churn_bound(risks[anchor_id], eps_sample),
                "rashomon_membership_churn",
                context={
                    "pair": [anchor_id, mid],
                    "epsilon_sample": eps_sample,
                    "epsilon_config": config.rashomon.epsilon,
                    "sample": "test",
                },
            ).to_dict()
        )
        bounds_reports.append(
            check_bound(
                c,
                churn_sum_bound(risks[anchor_id], risks[mid]),
                "churn_risk_sum",
                context={"pair": [anchor_id, mid], "sample": "test"},
            ).to_dict()
        )

    regimes_block = {}
    for regime in config.regimes:
        rid = f"a_{regime.name}"
        a_row = pm.row(rid)
        u_c = churn_unstable_set(labels[a_row], labels[b_row])
        c_val = churn(labels[a_row], labels[b_row])
        ca = common_arbitrariness(u_r, u_c)
        smooth = {
            f"{g:g}": smooth_churn(
                scores[a_row], scores[b_row], y_test, SmoothChurnParams(g)
            )
            for g in config.gammas
        }
        bounds_reports.append(
            check_bound(
                c_val,
                churn_sum_bound(risks[rid], risks["b"]),
                "churn_risk_sum",
                context={"pair": [rid, "b"], "sample": "test"},
            ).to_dict()
        )
        regimes_block[regime.name] = {
            "fraction": regime.fraction,
            "subsample_seed": meta["regimes"][regime.name]["subsample_seed"],
            "n_subsample": meta["regimes"][regime.name]["n_subsample"],
            "model_a": {"auc": aucs[rid], "risk": risks[rid]},
            "churn": c_val,
            "churn_unstable_count": int(u_c.size),
            "churn_unstable_ids": [int(pm.sample_ids[i]) for i in u_c],
            "signed_loss_churn": signed_loss_churn(
                scores[a_row], scores[b_row], y_test
            ),
            "smooth_churn": smooth,
            "common_arbitrariness": ca,
            "common_arbitrariness_vacuous": bool(u_c.size == 0),
        }

    block = {
        "base_seed": meta["base_seed"],
        "platt": meta["platt"],
        "model_b": {"auc": aucs["b"], "risk": risks["b"]},
        "regimes": regimes_block,
        "multiplicity": {
            "anchor": meta["anchor"],
            "anchor_model": {"auc": aucs[anchor_id], "risk": risks[anchor_id]},
            "m": config.rashomon.m,
            "accepted": len(member_rows),
            "rejected": len(meta["rejected_members"]),
            "member_seeds": meta["member_seeds"],
            "member_train_metrics": meta["member_train_metrics"],
            "empirical_ambiguity": ambiguity,
            "rashomon_unstable_count": int(u_r.size),
            "rashomon_unstable_ids": [int(pm.sample_ids[i]) for i in u_r],
            "baseline_ambiguity": base_amb,
            "discrepancy": {"value": disc_value, "model_id": disc_model},
            "auc_members": {
                "mean": float(np.mean(member_aucs)),
                "min": float(np.min(member_aucs)),
                "max": float(np.max(member_aucs)),
            },
        },
        "bounds": bounds_reports,
    }
    return block


def _plot_blocks(config, pm: PredictionMatrix, meta: dict, y_test) -> dict:
    """Histogram bins and uncertainty curves per experiment, from one rep."""
    anchor_id = "b" if meta["anchor"] == "b" else f"a_{meta['anchor']}"
    anchor_row = pm.row(anchor_id)
    member_rows = [i for i, mid in enumerate(pm.model_ids) if mid.startswith("m")]
    member_matrix = PredictionMatrix(
        scores=pm.scores[member_rows],
        sample_ids=pm.sample_ids,
        model_ids=[pm.model_ids[i] for i in member_rows],
    )
    u_r = rashomon_unstable_set(member_matrix)
    thresholds = np.linspace(0.0, 0.25, config.n_thresholds)

    blocks = {}

    def one(name: str, ref_row: int, unstable: np.ndarray):
        ref_scores = pm.scores[ref_row]
        uncertainties = ref_scores * (1.0 - ref_scores)
        bins = probability_flip_bins(ref_scores, unstable, config.n_bins)
        curve = uncertainty_threshold_curve(uncertainties, unstable, thresholds)
        blocks[name] = {
            "reference_model": pm.model_ids[ref_row],
            "bins": [
                {
                    "bin_lo": b.lo, "bin_hi": b.hi, "count": b.count,
                    "flip_proportion": b.flip_proportion, "empty": b.empty,
                }
                for b in bins
            ],
            "curve": [
                {"threshold": c.threshold, "proportion": c.proportion,
                 "defined": c.defined}
                for c in curve
            ],
        }

    one("multiplicity", anchor_row, u_r)
    b_row = pm.row("b")
    for regime in config.regimes:
        a_row = pm.row(f"a_{regime.name}")
        u_c = churn_unstable_set(pm.labels[a_row], pm.labels[b_row])
        one(f"{regime.name}_update", a_row, u_c)
    return blocks


def stage_analyze(config: ExperimentConfig, paths: RunPaths) -> StabilityReport:
    data, split, calib, model_train = load_ingested(paths)
    test = split.test_indices
    n_reps = len(config.seed_arrays)

    classes_block = {}
    all_bounds = []
    plot_data = {}
    for spec in config.model_classes.values():
        if not spec.enabled:
            continue
        per_rep = []
        for rep in range(n_reps):
            class_dir = paths.class_dir(rep, spec.name)
            block = analyze_class_rep(config, data, test, class_dir)
            block["rep"] = rep
            per_rep.append(block)
            all_bounds.extend(block["bounds"])

        agg = {
            "empirical_ambiguity": _stats(
                [b["multiplicity"]["empirical_ambiguity"] for b in per_rep]
            ),
            "baseline_ambiguity": _stats(
                [b["multiplicity"]["baseline_ambiguity"] for b in per_rep]
            ),
            "discrepancy": _stats(
                [b["multiplicity"]["discrepancy"]["value"] for b in per_rep]
            ),
            "auc_model_b": _stats([b["model_b"]["auc"] for b in per_rep]),
            "auc_members_mean": _stats(
                [b["multiplicity"]["auc_members"]["mean"] for b in per_rep]
            ),
            "regimes": {},
        }
        for regime in config.regimes:
            agg["regimes"][regime.name] = {
                "churn": _stats(
                    [b["regimes"][regime.name]["churn"] for b in per_rep]
                ),
                "common_arbitrariness": _stats(
                    [b["regimes"][regime.name]["common_arbitrariness"] for b in per_rep]
                ),
                "auc_model_a": _stats(
                    [b["regimes"][regime.name]["model_a"]["auc"] for b in per_rep]
                ),
            }
        classes_block[spec.name] = {"per_rep": per_rep, "aggregate": agg}

        # plot data from the first repetition
        first_dir = paths.class_dir(0, spec.name)
        pm0 = PredictionMatrix.load_csv(first_dir / "scores.csv")
        meta0 = json.loads((first_dir / "meta.json").read_text())
        plot_data[spec.name] = {"rep": 0, **{"experiments": _plot_blocks(
            config, pm0, meta0, data.y[test])}}

    extras = _run_extras(config, paths, data, model_train, test)

    n_violations = sum(1 for b in all_bounds if not b["satisfied"])
    report = StabilityReport(doc={
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": config.resolved_dict(),
        "config_hash": config.config_hash(),
        "dataset": {
            "source": data.provenance.get("source"),
            "n": data.n,
            "d": data.d,
            "positive_rate": float(data.y.mean()),
            "preprocessing_hash": data.provenance.get("preprocessing_hash"),
            "dropped_constant_columns": data.provenance.get(
                "dropped_constant_columns", []
            ),
            "prng": data.provenance.get("prng"),
        },
        "split": {
            "seed": split.seed,
            "test_fraction": split.test_fraction,
            "n_train": int(model_train.size),
            "n_test": int(test.size),
            "n_calibration": int(calib.size),
        },
        "classes": classes_block,
        "bounds_summary": {
            "n_checks": len(all_bounds),
            "n_violations": n_violations,
            "all_satisfied": n_violations == 0,
        },
        "extras": extras,
        "plot_data": plot_data,
    })
    return report


def _run_extras(config, paths, data, model_train, test) -> dict:
    """Optional Monte-Carlo checks; each reports its result or why skipped."""
    extras: dict = {}
    plain_specs = [
        s for s in config.model_classes.values() if s.enabled and s.head is None
    ]

    if config.bounds.zero_churn_pairs >= 2 and plain_specs:
        spec = plain_specs[0]
        base_seed = int(config.seed_arrays[0][0])
        b_model = load_model(paths.class_dir(0, spec.name) / "b.json")
        zc = zero_churn_diff_test(
            data, model_train, b_model, spec.train,
            pairs=config.bounds.zero_churn_pairs,
            eval_indices=test, seed=base_seed,
        )
        extras["zero_churn"] = zc.to_dict()
    else:
        extras["zero_churn"] = {
            "skipped": "bounds.zero_churn_pairs < 2 or no plain class enabled"
        }

    if config.bounds.theorem_check and plain_specs:
        spec = plain_specs[0]
        extras["theorem_check"] = _theorem_check(config, paths, data, model_train,
                                                 test, spec)
    else:
        extras["theorem_check"] = {"skipped": "bounds.theorem_check disabled"}
    return extras


def _theorem_check(config, paths, data, model_train, test, spec) -> dict:
    """Expected-smooth-churn consistency: members around A vs members around B."""
    class_dir = paths.class_dir(0, spec.name)
    rset_a = RashomonSet.load(class_dir / "rashomon")
    meta = json.loads((class_dir / "meta.json").read_text())
    base_seed = meta["base_seed"]

    b_model = load_model(class_dir / "b.json")
    m_b = min(5, config.rashomon.m)
    seeds_b = derive_member_seeds([base_seed, 4242], m_b)
    rset_b = empirical_rashomon(
        data, model_train,
        RashomonConfig(
            epsilon=config.rashomon.epsilon, metric=config.rashomon.metric,
            m=m_b, seeds=tuple(seeds_b),
        ),
        spec.train, baseline=b_model,
    )
    if spec.train.arch == "logreg" and spec.train.l2_penalty > 0:
        beta = beta_closed_form_lr(
            max_feature_norm(data, model_train),
            spec.train.l2_penalty,
            model_train.size,
        )
        source = "closed_form_l2_logistic"
    else:
        beta = beta_estimate(
            data, model_train, spec.train,
            trials=config.bounds.beta_trials, seed=base_seed,
        )
        source = "estimated"
    members_a = rset_a.members[: min(5, len(rset_a.members))]
    report = smooth_churn_theorem_check(
        members_a, rset_b.members, data, test,
        StabilityParams(
            beta=beta, n=model_train.size,
            gamma=config.bounds.gamma, epsilon=config.rashomon.epsilon,
        ),
        beta_source=source,
    )
    return report.to_dict()


# ---------------------------------------------------------------------------
# plot-data emission


def emit_plot_data(report: StabilityReport, out_dir: str | Path) -> list[Path]:
    """Write the report's bin and curve blocks as plot-ready CSVs.

    One bin file and one curve file per (model class, experiment); re-running
    on the same report writes byte-identical files.
    """
    import csv as _csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for class_name, pd in sorted(report.doc.get("plot_data", {}).items()):
        for exp_name, block in sorted(pd["experiments"].items()):
            bin_path = out_dir / f"prob_flip_bins_{class_name}_{exp_name}.csv"
            with open(bin_path, "w", newline="", encoding="utf-8") as fh:
                w = _csv.writer(fh)
                w.writerow(["bin_lo", "bin_hi", "count", "flip_proportion", "empty"])
                for b in block["bins"]:
                    w.writerow([
                        repr(b["bin_lo"]), repr(b["bin_hi"]), b["count"],
                        repr(b["flip_proportion"]), int(b["empty"]),
                    ])
            written.append(bin_path)

            curve_path = out_dir / f"uncertainty_curve_{class_name}_{exp_name}.csv"
            with open(curve_path, "w", newline="", encoding="utf-8") as fh:
                w = _csv.writer(fh)
                w.writerow(["threshold", "proportion", "defined", "experiment"])
                for c in block["curve"]:
                    w.writerow([
                        repr(c["threshold"]), repr(c["proportion"]),
                        int(c["defined"]), exp_name,
                    ])
            written.append(curve_path)
    return written


# ---------------------------------------------------------------------------
# orchestration


def plan_jobs(config: ExperimentConfig) -> list[str]:
    """Dry-run listing of the work a full run would do."""
    lines = []
    n_reps = len(config.seed_arrays)
    enabled = [s for s in config.model_classes.values() if s.enabled]
    lines.append(f"ingest: dataset + split ({config.dataset.synthetic or config.dataset.path})")
    for rep in range(n_reps):
        for spec in enabled:
            n_train_jobs = 1 + len(config.regimes) + config.rashomon.m
            kind = "ua" if spec.head is not None else spec.train.arch
            lines.append(
                f"rep{rep}/{spec.name}: {n_train_jobs} trainings "
                f"({kind}; 1 model B + {len(config.regimes)} model A + "
                f"{config.rashomon.m} rashomon members)"
            )
    lines.append("analyze: metrics + bounds + report")
    total = n_reps * len(enabled) * (1 + len(config.regimes) + config.rashomon.m)
    lines.append(f"total trainings: {total}")
    return lines


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None
                   ) -> StabilityReport:
    """Execute every stage and return the final report.

    Also writes report.json, plot CSVs, and a timings sidecar under the
    output directory.
    """
    paths = RunPaths(Path(out_dir or config.output_dir))
    timings = {}

    t0 = time.perf_counter()
    stage_ingest(config, paths)
    timings["ingest_seconds"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    stage_train(config, paths)
    timings["train_seconds"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    stage_rashomon(config, paths)
    timings["rashomon_seconds"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    report = stage_analyze(config, paths)
    report.save(paths.report)
    emit_plot_data(report, paths.plots)
    timings["analyze_seconds"] = round(time.perf_counter() - t0, 3)

    paths.timings.write_text(json.dumps(timings, sort_keys=True, indent=1))
    return report
