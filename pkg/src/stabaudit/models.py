"""Desk-scale classifiers: logistic regression, a one-hidden-layer MLP, and
an uncertainty-aware variant with a random-feature Gaussian-process head.

Training is plain mini-batch gradient descent with a fixed epoch count, so
the training map is a deterministic function of (data, indices, config):
the seed drives parameter init and per-epoch shuffle order and nothing else.
That determinism is load-bearing: churn and ambiguity measurements compare
label flips between trained models, and any hidden nondeterminism would
contaminate them.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.optimize import minimize
from scipy.spatial.distance import pdist
from scipy.special import expit
from scipy.stats import rankdata

from .data import Dataset
from .errors import (
    DegenerateHoldoutError,
    DivergedLossError,
    SingleClassTrainingSetError,
    SingularPrecisionError,
)

MODEL_FORMAT_VERSION = 1

# Standard mean-field probit coefficient; used to shrink logits by
# sqrt(1 + lambda * variance) when forming the posterior predictive.
MEAN_FIELD_LAMBDA = math.pi / 8


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "logreg"  # "logreg" | "mlp"
    learning_rate: float = 0.3
    batch_size: int = 128
    epochs: int = 60
    l2_penalty: float = 1e-4
    seed: int = 0
    hidden_units: int = 279
    init_scale: float = 0.1

    def __post_init__(self):
        if self.arch not in ("logreg", "mlp"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")
        if self.arch == "mlp" and self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1 for mlp")

    @classmethod
    def logreg_defaults(cls, seed: int = 0, **overrides) -> "TrainConfig":
        return cls(arch="logreg", seed=seed, **overrides)

    @classmethod
    def mlp_defaults(cls, seed: int = 0, **overrides) -> "TrainConfig":
        """One hidden layer of 279 ReLU units, lr 5.79e-5, batches of 128."""
        defaults = dict(
            arch="mlp", learning_rate=5.79e-5, batch_size=128, epochs=100,
            l2_penalty=0.0, hidden_units=279, init_scale=1.0,
        )
        defaults.update(overrides)
        return cls(seed=seed, **defaults)

    def with_seed(self, seed: int) -> "TrainConfig":
        return dataclasses.replace(self, seed=seed)


# ---------------------------------------------------------------------------
# losses and gradients (pure functions, finite-difference testable)


def _mean_ce(logits: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^z) - y*z, computed stably
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def lr_loss_grad(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy + l2*||w||^2 and its gradient."""
    z = X @ w
    loss = _mean_ce(z, y) + l2 * float(w @ w)
    grad = X.T @ (expit(z) - y) / X.shape[0] + 2.0 * l2 * w
    return loss, grad


def mlp_forward(params: dict, X: np.ndarray) -> np.ndarray:
    z1 = X @ params["W1"] + params["b1"]
    h = np.maximum(z1, 0.0)
    return h @ params["w2"] + params["b2"]


def mlp_loss_grad(params: dict, X: np.ndarray, y: np.ndarray, l2: float):
    """Loss and per-parameter gradients for the one-hidden-layer MLP.

    The l2 penalty covers every parameter, biases included, to match the
    logistic objective's ||theta||^2 convention.
    """
    n = X.shape[0]
    z1 = X @ params["W1"] + params["b1"]
    h = np.maximum(z1, 0.0)
    logits = h @ params["w2"] + params["b2"]
    loss = _mean_ce(logits, y) + l2 * sum(
        float(np.sum(p * p)) for p in params.values()
    )
    dlogit = (expit(logits) - y) / n
    dh = np.outer(dlogit, params["w2"])
    dz1 = dh * (z1 > 0)
    grads = {
        "W1": X.T @ dz1 + 2.0 * l2 * params["W1"],
        "b1": dz1.sum(axis=0) + 2.0 * l2 * params["b1"],
        "w2": h.T @ dlogit + 2.0 * l2 * params["w2"],
        "b2": np.array(dlogit.sum() + 2.0 * l2 * params["b2"]),
    }
    return loss, grads


def _init_params(config: TrainConfig, n_features: int, rng) -> dict:
    if config.arch == "logreg":
        return {"w": config.init_scale * rng.standard_normal(n_features)}
    H = config.hidden_units
    return {
        "W1": rng.standard_normal((n_features, H))
        * math.sqrt(2.0 / n_features) * config.init_scale,
        "b1": np.zeros(H),
        "w2": rng.standard_normal(H) * math.sqrt(1.0 / H) * config.init_scale,
        "b2": np.array(0.0),
    }


# ---------------------------------------------------------------------------
# classifiers


@dataclass
class Classifier:
    """A trained scorer: score(x) in [0, 1], predict = 1{score >= 0.5}.

    A score of exactly 0.5 predicts class 1. The tie rule is arbitrary but
    must be fixed: churn and ambiguity count label flips, so any drift in
    the convention would register as phantom instability.
    """

    arch: str
    params: dict
    calibration: tuple[float, float] | None = None  # Platt (a, b) on the logit
    train_meta: dict = field(default_factory=dict)

    def raw_logit(self, X: np.ndarray) -> np.ndarray:
        if self.arch == "logreg":
            return X @ self.params["w"]
        return mlp_forward(self.params, X)

    def logit(self, X: np.ndarray) -> np.ndarray:
        z = self.raw_logit(X)
        if self.calibration is not None:
            a, b = self.calibration
            z = a * z + b
        return z

    def score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.logit(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.score(X) >= 0.5).astype(np.int64)

    def hidden_features(self, X: np.ndarray) -> np.ndarray:
        """Backbone representation: hidden activations for mlp, X itself
        for logreg (which has no hidden layer)."""
        if self.arch == "mlp":
            return np.maximum(X @ self.params["W1"] + self.params["b1"], 0.0)
        return X


def train(data: Dataset, indices: np.ndarray, config: TrainConfig) -> Classifier:
    """Mini-batch gradient descent on cross-entropy + l2*||theta||^2.

    Deterministic given (data, indices, config); the seed controls init and
    shuffle order only.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise SingleClassTrainingSetError("empty training index set")
    X = data.X[indices]
    y = data.y[indices].astype(np.float64)
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassTrainingSetError(f"only class {classes} present")

    rng = np.random.default_rng(config.seed)
    params = _init_params(config, X.shape[1], rng)
    n = X.shape[0]
    bs = min(config.batch_size, n)

    def probe_loss() -> float:
        xb, yb = X[:bs], y[:bs]
        if config.arch == "logreg":
            return lr_loss_grad(params["w"], xb, yb, config.l2_penalty)[0]
        return mlp_loss_grad(params, xb, yb, config.l2_penalty)[0]

    for _ in range(config.epochs):
        perm = rng.permutation(n)
        Xp, yp = X[perm], y[perm]
        for start in range(0, n, bs):
            xb = Xp[start : start + bs]
            yb = yp[start : start + bs]
            if config.arch == "logreg":
                _, g = lr_loss_grad(params["w"], xb, yb, config.l2_penalty)
                params["w"] = params["w"] - config.learning_rate * g
            else:
                _, grads = mlp_loss_grad(params, xb, yb, config.l2_penalty)
                for k in params:
                    params[k] = params[k] - config.learning_rate * grads[k]
        if not all(np.all(np.isfinite(p)) for p in params.values()) or not \
                math.isfinite(probe_loss()):
            raise DivergedLossError("non-finite loss encountered during training")

    if config.arch == "logreg":
        final_loss, _ = lr_loss_grad(params["w"], X, y, config.l2_penalty)
    else:
        final_loss, _ = mlp_loss_grad(params, X, y, config.l2_penalty)
    if not math.isfinite(final_loss):
        raise DivergedLossError(f"final training loss is {final_loss}")

    return Classifier(
        arch=config.arch,
        params=params,
        train_meta={
            "seed": config.seed,
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "l2_penalty": config.l2_penalty,
            "n_train": int(n),
            "final_train_loss": final_loss,
        },
    )


# ---------------------------------------------------------------------------
# calibration


def platt_calibrate(
    clf: Classifier, holdout_indices: np.ndarray, data: Dataset
) -> Classifier:
    """Fit (a, b) maximizing holdout likelihood of sigmoid(a*logit + b).

    Returns a copy of the classifier with the mapping installed; the
    original is untouched. A monotone mapping (a > 0) cannot change AUC.
    """
    y = data.y[holdout_indices].astype(np.float64)
    if np.unique(y).size < 2:
        raise DegenerateHoldoutError("holdout contains a single class")
    z = clf.raw_logit(data.X[holdout_indices])
    n = z.size

    def nll_grad(ab):
        a, b = ab
        m = a * z + b
        nll = np.mean(np.logaddexp(0.0, m) - y * m)
        r = (expit(m) - y) / n
        return nll, np.array([r @ z, r.sum()])

    res = minimize(nll_grad, x0=np.array([1.0, 0.0]), jac=True, method="L-BFGS-B")
    a, b = float(res.x[0]), float(res.x[1])
    return Classifier(
        arch=clf.arch,
        params={k: np.array(v, copy=True) for k, v in clf.params.items()},
        calibration=(a, b),
        train_meta=dict(clf.train_meta, platt_nll=float(res.fun)),
    )


# ---------------------------------------------------------------------------
# uncertainty-aware classifier: random-feature GP head + Laplace posterior


@dataclass(frozen=True)
class HeadConfig:
    num_features: int = 256
    prior_precision: float = 1.0
    mean_field_lambda: float = MEAN_FIELD_LAMBDA
    lengthscale: float | str = "median"  # "median" = median pairwise distance
    seed: int | None = None  # None: derived from the backbone train seed
    newton_iters: int = 50
    newton_tol: float = 1e-10

    def __post_init__(self):
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.prior_precision <= 0:
            raise ValueError("prior_precision must be > 0")
        if self.mean_field_lambda < 0:
            raise ValueError("mean_field_lambda must be >= 0")


@dataclass
class UncertaintyHead:
    """Random Fourier features + logistic weights + Laplace covariance."""

    rff_weights: np.ndarray  # D x F projection
    rff_phase: np.ndarray  # D
    lengthscale: float
    posterior_mean: np.ndarray  # D
    posterior_precision: np.ndarray  # D x D, symmetric positive definite
    prior_precision: float
    mean_field_lambda: float
    _chol: tuple | None = field(default=None, repr=False, compare=False)

    def features(self, Z: np.ndarray) -> np.ndarray:
        D = self.rff_weights.shape[0]
        proj = Z @ (self.rff_weights.T / self.lengthscale) + self.rff_phase
        return math.sqrt(2.0 / D) * np.cos(proj)

    def _factor(self):
        if self._chol is None:
            try:
                self._chol = cho_factor(self.posterior_precision)
            except LinAlgError as e:
                raise SingularPrecisionError(str(e)) from e
        return self._chol

    def logit_and_variance(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        phi = self.features(Z)
        logit = phi @ self.posterior_mean
        solved = cho_solve(self._factor(), phi.T)
        variance = np.einsum("ij,ji->i", phi, solved)
        return logit, np.maximum(variance, 0.0)


@dataclass
class UAClassifier:
    """Backbone feature extractor plus an uncertainty head.

    The usable score is the mean-field posterior predictive; growing
    predictive variance pulls it toward 0.5.
    """

    backbone: Classifier
    head: UncertaintyHead

    def logit_and_variance(self, X: np.ndarray):
        return self.head.logit_and_variance(self.backbone.hidden_features(X))

    def score(self, X: np.ndarray) -> np.ndarray:
        return mean_field_predict(self, X)[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.score(X) >= 0.5).astype(np.int64)


def mean_field_adjust(logit, variance, lam=MEAN_FIELD_LAMBDA):
    """sigmoid(logit / sqrt(1 + lam*variance)): binary mean-field predictive."""
    return expit(np.asarray(logit) / np.sqrt(1.0 + lam * np.asarray(variance)))


def mean_field_predict(ua: UAClassifier, X: np.ndarray):
    """Posterior predictive probability and variance at each row of X."""
    logit, variance = ua.logit_and_variance(X)
    return mean_field_adjust(logit, variance, ua.head.mean_field_lambda), variance


def _median_lengthscale(Z: np.ndarray, rng) -> float:
    m = min(Z.shape[0], 512)
    sub = Z[rng.choice(Z.shape[0], size=m, replace=False)] if Z.shape[0] > m else Z
    med = float(np.median(pdist(sub)))
    return med if med > 0 else 1.0


def fit_head(
    features: np.ndarray, y: np.ndarray, head_config: HeadConfig, rff_seed: int
) -> UncertaintyHead:
    """Penalized logistic fit on random features with a Laplace posterior.

    Newton/IRLS on the ridge-penalized logistic objective; the converged
    Hessian (prior + sum p(1-p) phi phi^T) is kept as the posterior
    precision. The prior term keeps it positive definite.
    """
    rng = np.random.default_rng(rff_seed)
    D, F = head_config.num_features, features.shape[1]
    if head_config.lengthscale == "median":
        lengthscale = _median_lengthscale(features, rng)
    else:
        lengthscale = float(head_config.lengthscale)
    rff_weights = rng.standard_normal((D, F))
    rff_phase = rng.uniform(0.0, 2.0 * math.pi, size=D)

    head = UncertaintyHead(
        rff_weights=rff_weights,
        rff_phase=rff_phase,
        lengthscale=lengthscale,
        posterior_mean=np.zeros(D),
        posterior_precision=np.eye(D) * head_config.prior_precision,
        prior_precision=head_config.prior_precision,
        mean_field_lambda=head_config.mean_field_lambda,
    )
    phi = head.features(features)
    tau = head_config.prior_precision
    beta = np.zeros(D)
    y = y.astype(np.float64)
    for _ in range(head_config.newton_iters):
        p = expit(phi @ beta)
        g = phi.T @ (p - y) + tau * beta
        H = (phi * (p * (1.0 - p))[:, None]).T @ phi + tau * np.eye(D)
        try:
            step = cho_solve(cho_factor(H), g)
        except LinAlgError as e:
            raise SingularPrecisionError(str(e)) from e
        beta = beta - step
        if np.max(np.abs(step)) < head_config.newton_tol:
            break
    p = expit(phi @ beta)
    precision = (phi * (p * (1.0 - p))[:, None]).T @ phi + tau * np.eye(D)
    head.posterior_mean = beta
    head.posterior_precision = 0.5 * (precision + precision.T)
    head._chol = None
    return head


def train_ua(
    data: Dataset,
    indices: np.ndarray,
    config: TrainConfig,
    head_config: HeadConfig = HeadConfig(),
) -> UAClassifier:
    """Train the backbone, then fit the GP head on its hidden features.

    The random-feature draw is part of the randomized training procedure:
    unless head_config.seed pins it, the feature seed is derived from the
    backbone seed so retraining with a new seed redraws the head too.
    """
    backbone = train(data, indices, config)
    feats = backbone.hidden_features(data.X[indices])
    if head_config.seed is not None:
        rff_seed = head_config.seed
    else:
        rff_seed = int(
            np.random.SeedSequence([config.seed, 0x5247]).generate_state(1)[0]
        )
    head = fit_head(feats, data.y[indices], head_config, rff_seed)
    return UAClassifier(backbone=backbone, head=head)


def pointwise_uncertainty(model, X: np.ndarray) -> np.ndarray:
    """p(1-p) of the model's predicted probability; in [0, 0.25]."""
    p = model.score(X)
    return p * (1.0 - p)


# ---------------------------------------------------------------------------
# evaluation helpers


def auc(scores: np.ndarray, y: np.ndarray) -> float:
    """Rank-based AUC (ties share average rank)."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined with a single class")
    ranks = rankdata(scores)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def mean_cross_entropy(model, X: np.ndarray, y: np.ndarray) -> float:
    """Unpenalized mean cross-entropy of the model's scores on (X, y)."""
    if isinstance(model, UAClassifier):
        logit, variance = model.logit_and_variance(X)
        z = logit / np.sqrt(1.0 + model.head.mean_field_lambda * variance)
    else:
        z = model.logit(X)
    return _mean_ce(z, y.astype(np.float64))


def error_rate(model, X: np.ndarray, y: np.ndarray) -> float:
    """Accuracy error (1 - accuracy) of thresholded predictions."""
    return float(np.mean(model.predict(X) != y))


# ---------------------------------------------------------------------------
# serialization (versioned JSON)


def _arrays_to_lists(params: dict) -> dict:
    return {k: np.asarray(v).tolist() for k, v in params.items()}


def _lists_to_arrays(params: dict) -> dict:
    return {k: np.array(v, dtype=np.float64) for k, v in params.items()}


def classifier_to_dict(clf: Classifier) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "classifier",
        "arch": clf.arch,
        "params": _arrays_to_lists(clf.params),
        "calibration": list(clf.calibration) if clf.calibration else None,
        "train_meta": clf.train_meta,
    }


def ua_classifier_to_dict(ua: UAClassifier) -> dict:
    h = ua.head
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "ua_classifier",
        "backbone": classifier_to_dict(ua.backbone),
        "head": {
            "rff_weights": h.rff_weights.tolist(),
            "rff_phase": h.rff_phase.tolist(),
            "lengthscale": h.lengthscale,
            "posterior_mean": h.posterior_mean.tolist(),
            "posterior_precision": h.posterior_precision.tolist(),
            "prior_precision": h.prior_precision,
            "mean_field_lambda": h.mean_field_lambda,
        },
    }


def model_to_dict(model) -> dict:
    if isinstance(model, UAClassifier):
        return ua_classifier_to_dict(model)
    return classifier_to_dict(model)


def model_from_dict(doc: dict):
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    if doc["kind"] == "classifier":
        cal = doc.get("calibration")
        return Classifier(
            arch=doc["arch"],
            params=_lists_to_arrays(doc["params"]),
            calibration=tuple(cal) if cal else None,
            train_meta=doc.get("train_meta", {}),
        )
    if doc["kind"] == "ua_classifier":
        h = doc["head"]
        head = UncertaintyHead(
            rff_weights=np.array(h["rff_weights"]),
            rff_phase=np.array(h["rff_phase"]),
            lengthscale=float(h["lengthscale"]),
            posterior_mean=np.array(h["posterior_mean"]),
            posterior_precision=np.array(h["posterior_precision"]),
            prior_precision=float(h["prior_precision"]),
            mean_field_lambda=float(h["mean_field_lambda"]),
        )
        return UAClassifier(backbone=model_from_dict(doc["backbone"]), head=head)
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))
