"""Experiment configuration: schema, defaults, and validation.

A config file (TOML or JSON) describes one full experiment: dataset and
split, model classes, the Rashomon construction, update regimes, metric
settings, and seed arrays. `validate_config` fills every default, collects
per-field diagnostics with config-path locations, and warns on unknown keys
with a nearest-name suggestion. The fully resolved config is hashed for
provenance; two runs with the same hash are byte-identical.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .models import MEAN_FIELD_LAMBDA, HeadConfig, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Five arrays of training seeds; repetitions of an experiment walk these
# arrays, and per-model seeds are derived from the active array.
SEED_ARRAYS: tuple[tuple[int, ...], ...] = (
    (0, 1, 109, 10, 1234),
    (3666, 2299, 2724, 1262, 4220),
    (3971, 9444, 1375, 7351, 2083),
    (1429, 2281, 2189, 9376, 2261),
    (1881, 2273, 9509, 6707, 4412),
)

DEFAULT_EPSILON = 0.01
DEFAULT_M = 25
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_CALIBRATION_FRACTION = 0.1


@dataclass(frozen=True)
class DatasetSpec:
    """Either a CSV on disk or a named synthetic generator."""

    path: str | None = None
    target_column: str | None = None
    positive_label: str | None = None
    categorical_columns: tuple[str, ...] = ()
    numeric_columns: tuple[str, ...] = ()
    synthetic: str | None = None  # "census" | "credit"
    n: int | None = None
    seed: int = 7


@dataclass(frozen=True)
class RegimeSpec:
    name: str
    fraction: float


@dataclass(frozen=True)
class RashomonSettings:
    epsilon: float = DEFAULT_EPSILON
    metric: str = "loss_gap"
    m: int = DEFAULT_M
    anchor: str = "small"  # regime name whose model A anchors multiplicity, or "b"
    seeds: tuple[int, ...] | None = None  # explicit member seeds (single-rep runs)


@dataclass(frozen=True)
class ModelClassSpec:
    name: str
    train: TrainConfig
    head: HeadConfig | None = None  # present => uncertainty-aware class
    platt: bool = False
    enabled: bool = True

    @property
    def uncertainty_aware(self) -> bool:
        return self.head is not None


@dataclass(frozen=True)
class BoundsSettings:
    theorem_check: bool = False
    zero_churn_pairs: int = 0  # 0 disables the Monte-Carlo lemma check
    beta_trials: int = 3
    gamma: float = 0.1


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    split_test_fraction: float = DEFAULT_TEST_FRACTION
    split_seed: int = 13
    calibration_fraction: float = DEFAULT_CALIBRATION_FRACTION
    model_classes: dict = field(default_factory=dict)
    rashomon: RashomonSettings = field(default_factory=RashomonSettings)
    regimes: tuple[RegimeSpec, ...] = (
        RegimeSpec("large", 0.5),
        RegimeSpec("small", 0.95),
    )
    gammas: tuple[float, ...] = (0.1,)
    n_bins: int = 20
    n_thresholds: int = 50
    seed_arrays: tuple[tuple[int, ...], ...] = SEED_ARRAYS
    bounds: BoundsSettings = field(default_factory=BoundsSettings)
    output_dir: str = "out"
    jobs: int = 1

    def resolved_dict(self) -> dict:
        """Canonical JSON-ready form of the fully defaulted config."""
        classes = {}
        for name, spec in self.model_classes.items():
            t = spec.train
            entry = {
                "arch": t.arch,
                "learning_rate": t.learning_rate,
                "batch_size": t.batch_size,
                "epochs": t.epochs,
                "l2_penalty": t.l2_penalty,
                "hidden_units": t.hidden_units,
                "init_scale": t.init_scale,
                "platt": spec.platt,
                "enabled": spec.enabled,
            }
            if spec.head is not None:
                entry["head"] = {
                    "num_features": spec.head.num_features,
                    "prior_precision": spec.head.prior_precision,
                    "mean_field_lambda": spec.head.mean_field_lambda,
                    "lengthscale": spec.head.lengthscale,
                }
            classes[name] = entry
        return {
            "dataset": {
                "path": self.dataset.path,
                "target_column": self.dataset.target_column,
                "positive_label": self.dataset.positive_label,
                "categorical_columns": list(self.dataset.categorical_columns),
                "numeric_columns": list(self.dataset.numeric_columns),
                "synthetic": self.dataset.synthetic,
                "n": self.dataset.n,
                "seed": self.dataset.seed,
            },
            "split": {
                "test_fraction": self.split_test_fraction,
                "seed": self.split_seed,
                "calibration_fraction": self.calibration_fraction,
            },
            "models": classes,
            "rashomon": {
                "epsilon": self.rashomon.epsilon,
                "metric": self.rashomon.metric,
                "m": self.rashomon.m,
                "anchor": self.rashomon.anchor,
                "seeds": list(self.rashomon.seeds) if self.rashomon.seeds else None,
            },
            "regimes": [{"name": r.name, "fraction": r.fraction} for r in self.regimes],
            "churn": {"gammas": list(self.gammas)},
            "report": {"n_bins": self.n_bins, "n_thresholds": self.n_thresholds},
            "seeds": {"arrays": [list(a) for a in self.seed_arrays]},
            "bounds": {
                "theorem_check": self.bounds.theorem_check,
                "zero_churn_pairs": self.bounds.zero_churn_pairs,
                "beta_trials": self.bounds.beta_trials,
                "gamma": self.bounds.gamma,
            },
        }

    def config_hash(self) -> str:
        """Hash of the experiment identity; where outputs land and how many
        workers run are execution details and deliberately excluded."""
        blob = json.dumps(self.resolved_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# seed derivation


def derive_member_seeds(array, m: int) -> tuple[int, ...]:
    """Deterministic distinct member seeds for one repetition.

    The array itself is used directly when long enough; otherwise it seeds
    a portable generator (numpy SeedSequence) that is extended until m
    distinct values exist.
    """
    array = [int(a) for a in array]
    if m <= len(array):
        return tuple(array[:m])
    k = m
    while True:
        seeds = [int(s) for s in np.random.SeedSequence(array).generate_state(k)]
        distinct = list(dict.fromkeys(seeds))
        if len(distinct) >= m:
            return tuple(distinct[:m])
        k += m


def regime_subsample_seed(base_seed: int, regime_index: int) -> int:
    return int(
        np.random.SeedSequence([int(base_seed), 1000 + regime_index])
        .generate_state(1)[0]
    )


# ---------------------------------------------------------------------------
# file loading and validation


_TOP_LEVEL_KEYS = (
    "dataset", "split", "models", "rashomon", "regimes", "churn",
    "report", "seeds", "bounds", "output",
)


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, known, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _read_config_file(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix == ".toml":
        return tomllib.loads(text.decode("utf-8"))
    if path.suffix == ".json":
        return json.loads(text.decode("utf-8"))
    raise ConfigError([f"{path}: unsupported config extension (use .toml or .json)"])


def _default_plain() -> ModelClassSpec:
    return ModelClassSpec(name="plain", train=TrainConfig.logreg_defaults())


def _default_ua() -> ModelClassSpec:
    return ModelClassSpec(
        name="uncertainty_aware",
        train=TrainConfig.logreg_defaults(),
        head=HeadConfig(num_features=128),
    )


def _parse_train(name, doc, problems) -> TrainConfig | None:
    known = {
        "arch", "learning_rate", "batch_size", "epochs", "l2_penalty",
        "hidden_units", "init_scale", "platt", "enabled", "head",
    }
    arch = doc.get("arch", "logreg")
    kwargs = {}
    for k in ("learning_rate", "batch_size", "epochs", "l2_penalty",
              "hidden_units", "init_scale"):
        if k in doc:
            kwargs[k] = doc[k]
    try:
        if arch == "mlp":
            return TrainConfig.mlp_defaults(**kwargs)
        return TrainConfig.logreg_defaults(**kwargs)
    except (ValueError, TypeError) as e:
        problems.append(f"models.{name}: {e}")
        return None


def validate_config(path: str | Path) -> tuple[ExperimentConfig, list[str]]:
    """Load, default-fill, and validate a config file.

    Returns (config, warnings); raises ConfigError with per-field
    diagnostics when validation fails.
    """
    doc = _read_config_file(path)
    return validate_config_dict(doc, origin=str(path))


def validate_config_dict(doc: dict, origin: str = "<dict>") -> tuple[ExperimentConfig, list[str]]:
    problems: list[str] = []
    notes: list[str] = []

    for key in doc:
        if key not in _TOP_LEVEL_KEYS:
            notes.append(f"unknown key {key!r}{_suggest(key, _TOP_LEVEL_KEYS)}")

    # dataset -----------------------------------------------------------------
    ds = doc.get("dataset", {})
    known_ds = ("path", "target_column", "positive_label", "categorical_columns",
                "numeric_columns", "synthetic", "n", "seed")
    for key in ds:
        if key not in known_ds:
            notes.append(f"dataset: unknown key {key!r}{_suggest(key, known_ds)}")
    synthetic = ds.get("synthetic")
    path_ = ds.get("path")
    if synthetic is None and path_ is None:
        problems.append("dataset: need either 'path' or 'synthetic'")
    if synthetic is not None and synthetic not in ("census", "credit"):
        problems.append("dataset.synthetic: must be 'census' or 'credit'")
    if path_ is not None and synthetic is None:
        if not Path(path_).exists():
            problems.append(f"dataset.path: file not found: {path_}")
        if not ds.get("target_column"):
            problems.append("dataset.target_column: required with dataset.path")
    dataset = DatasetSpec(
        path=path_,
        target_column=ds.get("target_column"),
        positive_label=ds.get("positive_label"),
        categorical_columns=tuple(ds.get("categorical_columns", ())),
        numeric_columns=tuple(ds.get("numeric_columns", ())),
        synthetic=synthetic,
        n=ds.get("n"),
        seed=int(ds.get("seed", 7)),
    )

    # split ---------------------------------------------------------------------
    sp = doc.get("split", {})
    test_fraction = float(sp.get("test_fraction", DEFAULT_TEST_FRACTION))
    if not 0.0 < test_fraction < 1.0:
        problems.append("split.test_fraction: must be in (0, 1)")
    calib_fraction = float(sp.get("calibration_fraction", DEFAULT_CALIBRATION_FRACTION))
    if not 0.0 <= calib_fraction < 1.0:
        problems.append("split.calibration_fraction: must be in [0, 1)")
    split_seed = int(sp.get("seed", 13))

    # models ----------------------------------------------------------------
    classes: dict[str, ModelClassSpec] = {}
    models_doc = doc.get("models")
    if models_doc is None:
        classes["plain"] = _default_plain()
        classes["uncertainty_aware"] = _default_ua()
    else:
        for name, mdoc in models_doc.items():
            train_cfg = _parse_train(name, mdoc, problems)
            if train_cfg is None:
                continue
            head = None
            if "head" in mdoc or name == "uncertainty_aware":
                hd = mdoc.get("head", {})
                known_hd = ("num_features", "prior_precision", "mean_field_lambda",
                            "lengthscale", "seed")
                for key in hd:
                    if key not in known_hd:
                        notes.append(
                            f"models.{name}.head: unknown key {key!r}"
                            f"{_suggest(key, known_hd)}"
                        )
                try:
                    head = HeadConfig(
                        num_features=int(hd.get("num_features", 128)),
                        prior_precision=float(hd.get("prior_precision", 1.0)),
                        mean_field_lambda=float(
                            hd.get("mean_field_lambda", MEAN_FIELD_LAMBDA)
                        ),
                        lengthscale=hd.get("lengthscale", "median"),
                        seed=hd.get("seed"),
                    )
                except ValueError as e:
                    problems.append(f"models.{name}.head: {e}")
            platt = bool(mdoc.get("platt", train_cfg.arch == "mlp" and head is None))
            if platt and head is not None:
                problems.append(
                    f"models.{name}: platt calibration does not apply to "
                    "uncertainty-aware classes (mean-field is their calibration)"
                )
            classes[name] = ModelClassSpec(
                name=name,
                train=train_cfg,
                head=head,
                platt=platt,
                enabled=bool(mdoc.get("enabled", True)),
            )
    if not any(c.enabled for c in classes.values()):
        problems.append("models: at least one enabled model class required")

    # rashomon ----------------------------------------------------------------
    rdoc = doc.get("rashomon", {})
    known_r = ("epsilon", "metric", "m", "anchor", "seeds")
    for key in rdoc:
        if key not in known_r:
            notes.append(f"rashomon: unknown key {key!r}{_suggest(key, known_r)}")
    epsilon = float(rdoc.get("epsilon", DEFAULT_EPSILON))
    if not epsilon > 0 or not math.isfinite(epsilon):
        problems.append("rashomon.epsilon: epsilon must be > 0")
    metric = rdoc.get("metric", "loss_gap")
    if metric not in ("loss_gap", "accuracy_error_gap", "absolute_accuracy_error"):
        problems.append(f"rashomon.metric: unknown metric {metric!r}")
    m = int(rdoc.get("m", DEFAULT_M))
    if m < 1:
        problems.append("rashomon.m: must be >= 1")
    explicit_seeds = rdoc.get("seeds")
    if explicit_seeds is not None:
        explicit_seeds = tuple(int(s) for s in explicit_seeds)
        if len(explicit_seeds) != m:
            problems.append(f"rashomon.seeds: need exactly m={m} seeds")
        if len(set(explicit_seeds)) != len(explicit_seeds):
            problems.append("rashomon.seeds: seeds must be distinct")

    # regimes ------------------------------------------------------------------
    regimes_doc = doc.get("regimes")
    if regimes_doc is None:
        regimes = (RegimeSpec("large", 0.5), RegimeSpec("small", 0.95))
    else:
        regimes = []
        for i, r in enumerate(regimes_doc):
            name = r.get("name")
            frac = r.get("fraction")
            if not name:
                problems.append(f"regimes[{i}].name: required")
                continue
            if frac is None or not 0.0 < float(frac) <= 1.0:
                problems.append(f"regimes[{i}].fraction: must be in (0, 1]")
                continue
            regimes.append(RegimeSpec(str(name), float(frac)))
        regimes = tuple(regimes)
        if len({r.name for r in regimes}) != len(regimes):
            problems.append("regimes: names must be distinct")

    anchor = rdoc.get("anchor", "small" if any(r.name == "small" for r in regimes)
                      else (regimes[-1].name if regimes else "b"))
    if anchor != "b" and anchor not in {r.name for r in regimes}:
        problems.append(f"rashomon.anchor: {anchor!r} names no regime (or use 'b')")

    rashomon = RashomonSettings(
        epsilon=epsilon, metric=metric, m=m, anchor=anchor, seeds=explicit_seeds
    )

    # churn / report / seeds / bounds / output ---------------------------------
    churn_doc = doc.get("churn", {})
    gammas = tuple(float(g) for g in churn_doc.get("gammas", (0.1,)))
    if any(g <= 0 for g in gammas):
        problems.append("churn.gammas: all gammas must be > 0")

    report_doc = doc.get("report", {})
    n_bins = int(report_doc.get("n_bins", 20))
    n_thresholds = int(report_doc.get("n_thresholds", 50))
    if n_bins < 1:
        problems.append("report.n_bins: must be >= 1")
    if n_thresholds < 2:
        problems.append("report.n_thresholds: must be >= 2")

    seeds_doc = doc.get("seeds", {})
    arrays = seeds_doc.get("arrays")
    if arrays is None:
        seed_arrays = SEED_ARRAYS
    else:
        seed_arrays = tuple(tuple(int(s) for s in a) for a in arrays)
        if not seed_arrays or any(not a for a in seed_arrays):
            problems.append("seeds.arrays: need non-empty arrays")

    bounds_doc = doc.get("bounds", {})
    bounds = BoundsSettings(
        theorem_check=bool(bounds_doc.get("theorem_check", False)),
        zero_churn_pairs=int(bounds_doc.get("zero_churn_pairs", 0)),
        beta_trials=int(bounds_doc.get("beta_trials", 3)),
        gamma=float(bounds_doc.get("gamma", 0.1)),
    )

    out_doc = doc.get("output", {})
    output_dir = str(out_doc.get("dir", "out"))
    jobs = int(out_doc.get("jobs", 1))

    if problems:
        raise ConfigError([f"{origin}: {p}" for p in problems])

    config = ExperimentConfig(
        dataset=dataset,
        split_test_fraction=test_fraction,
        split_seed=split_seed,
        calibration_fraction=calib_fraction,
        model_classes=classes,
        rashomon=rashomon,
        regimes=regimes,
        gammas=gammas,
        n_bins=n_bins,
        n_thresholds=n_thresholds,
        seed_arrays=seed_arrays,
        bounds=bounds,
        output_dir=output_dir,
        jobs=jobs,
    )
    return config, notes
