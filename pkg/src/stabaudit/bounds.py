"""Analytic churn bounds and their empirical checkers.

The two exact bounds are counting identities on a fixed sample: churn
between two models never exceeds the sum of their empirical risks (triangle
inequality on label vectors), and churn between a baseline and any model
whose risk is within epsilon of it never exceeds 2*risk(baseline) + epsilon.
Both are only theorems when churn and risks are measured on the SAME
sample; mixing train risk with test churn can "violate" them spuriously,
so checkers here take one explicit sample.

The expected-smooth-churn bound beta*sqrt(pi*n)/gamma + 2*epsilon depends on
the training algorithm's uniform stability constant beta, which is not
computable exactly for our trainers; `beta_estimate` gives a Monte-Carlo
lower estimate and checks against it are labeled consistency checks, not
verifications. For L2-regularized logistic regression the classical
closed form L^2/(lambda*n) is offered as an analytic alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import InsufficientPairsError
from .metrics import SmoothChurnParams, signed_loss_churn, smooth_churn
from .models import TrainConfig, train

EXACT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class StabilityParams:
    """Inputs to the expected-smooth-churn bound."""

    beta: float
    n: int
    gamma: float
    epsilon: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.n <= 0 or self.gamma <= 0:
            raise ValueError("n and gamma must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class BoundReport:
    bound_name: str
    analytic_value: float
    measured_value: float
    satisfied: bool
    slack: float
    context: dict = field(default_factory=dict)
    tolerance: float = EXACT_TOLERANCE

    def to_dict(self) -> dict:
        return {
            "bound_name": self.bound_name,
            "analytic_value": self.analytic_value,
            "measured_value": self.measured_value,
            "satisfied": self.satisfied,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "context": self.context,
        }


def check_bound(measured: float, analytic: float, name: str,
                context: dict | None = None,
                tolerance: float = EXACT_TOLERANCE) -> BoundReport:
    """Package a measured-vs-analytic comparison; slack = analytic - measured."""
    if not (math.isfinite(measured) and math.isfinite(analytic)):
        raise ValueError("bound values must be finite")
    return BoundReport(
        bound_name=name,
        analytic_value=float(analytic),
        measured_value=float(measured),
        satisfied=measured <= analytic + tolerance,
        slack=float(analytic - measured),
        context=context or {},
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# closed-form bounds


def churn_sum_bound(risk_a: float, risk_b: float) -> float:
    """Upper bound on churn between two models: sum of empirical risks."""
    return float(risk_a) + float(risk_b)


def rashomon_churn_bound(baseline_risk: float, epsilon: float) -> float:
    """Upper bound on churn between a baseline and any member within epsilon."""
    return 2.0 * float(baseline_risk) + float(epsilon)


def expected_smooth_churn_bound(params: StabilityParams) -> float:
    """beta*sqrt(pi*n)/gamma + 2*epsilon."""
    return params.beta * math.sqrt(math.pi * params.n) / params.gamma \
        + 2.0 * params.epsilon


def beta_closed_form_lr(feature_norm_bound: float, l2_penalty: float,
                        n: int) -> float:
    """Classical uniform-stability constant for L2-regularized logistic
    regression: L^2 / (lambda * n), with L bounding the feature norms."""
    if l2_penalty <= 0 or n <= 0:
        raise ValueError("l2_penalty and n must be > 0")
    return feature_norm_bound**2 / (l2_penalty * n)


def max_feature_norm(data: Dataset, indices=None) -> float:
    X = data.X if indices is None else data.X[indices]
    return float(np.max(np.linalg.norm(X, axis=1)))


# ---------------------------------------------------------------------------
# empirical estimators


def beta_estimate(
    data: Dataset,
    train_indices,
    train_config: TrainConfig,
    trials: int = 5,
    seed: int = 0,
    n_probe: int = 256,
    trainer=train,
) -> float:
    """Monte-Carlo lower estimate of the uniform stability constant.

    Runs `trials` random single-example replacements of the training set and
    takes the running max of |score_T(x) - score_T^i(x)| over seeded probe
    points. A lower estimate: the true beta is a sup over all replacements
    and all x. Trials draw sequentially from one generator, so a longer run
    extends (never shrinks) a shorter one with the same seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    train_indices = np.asarray(train_indices)
    rng = np.random.default_rng(seed)

    probe_pool = np.arange(data.n)
    probe = rng.choice(probe_pool, size=min(n_probe, data.n), replace=False)
    X_probe = data.X[probe]

    base = trainer(data, train_indices, train_config)
    base_scores = base.score(X_probe)

    outside = np.setdiff1d(np.arange(data.n), train_indices)
    pool = outside if outside.size else np.arange(data.n)

    best = 0.0
    for _ in range(trials):
        j = int(rng.integers(train_indices.size))
        replacement = int(pool[rng.integers(pool.size)])
        perturbed = train_indices.copy()
        perturbed[j] = replacement
        alt = trainer(data, perturbed, train_config)
        gap = float(np.max(np.abs(base_scores - alt.score(X_probe))))
        best = max(best, gap)
    return best


@dataclass
class ZeroChurnDiffReport:
    """Monte-Carlo check that swapping same-procedure models leaves expected
    churn unchanged."""

    diffs: list
    mean: float
    standard_error: float
    contains_zero: bool
    pair_seeds: list

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "standard_error": self.standard_error,
            "contains_zero": self.contains_zero,
            "n_pairs": len(self.diffs),
            "diffs": self.diffs,
            "pair_seeds": self.pair_seeds,
        }


def zero_churn_diff_test(
    data: Dataset,
    train_indices,
    model_b,
    train_config: TrainConfig,
    pairs: int,
    eval_indices,
    seed: int = 0,
    trainer=train,
) -> ZeroChurnDiffReport:
    """Sample i.i.d. pairs (h_A, h_A') and difference their signed churn
    against a fixed model B on the evaluation sample.

    The randomized-procedure lemma predicts mean zero; the report states the
    sample mean, its standard error, and whether 0 sits inside mean +- 2 SE.
    """
    if pairs < 2:
        raise InsufficientPairsError(f"need >= 2 pairs, got {pairs}")
    X_eval = data.X[eval_indices]
    y_eval = data.y[eval_indices]
    scores_b = model_b.score(X_eval)

    pair_seeds = [
        [int(s) for s in row]
        for row in np.random.SeedSequence(seed).generate_state(2 * pairs)
        .reshape(pairs, 2)
    ]
    diffs = []
    for s1, s2 in pair_seeds:
        h1 = trainer(data, train_indices, train_config.with_seed(s1))
        h2 = trainer(data, train_indices, train_config.with_seed(s2))
        d = signed_loss_churn(h1.score(X_eval), scores_b, y_eval) - \
            signed_loss_churn(h2.score(X_eval), scores_b, y_eval)
        diffs.append(float(d))
    mean = float(np.mean(diffs))
    se = float(np.std(diffs, ddof=1) / math.sqrt(pairs))
    return ZeroChurnDiffReport(
        diffs=diffs,
        mean=mean,
        standard_error=se,
        contains_zero=abs(mean) <= 2.0 * se,
        pair_seeds=pair_seeds,
    )


def smooth_churn_theorem_check(
    members_a: list,
    members_b: list,
    data: Dataset,
    eval_indices,
    params: StabilityParams,
    beta_source: str = "estimated",
) -> BoundReport:
    """Mean smooth churn across cross-set model pairs vs the analytic bound.

    With an estimated beta this is a consistency check, not a verification:
    the estimate lower-bounds the true stability constant, and the member
    sets stand in for expectation over dataset draws. The context block
    records both caveats.
    """
    X = data.X[eval_indices]
    y = data.y[eval_indices]
    sc = SmoothChurnParams(gamma=params.gamma)
    scores_a = [m.score(X) for m in members_a]
    scores_b = [m.score(X) for m in members_b]
    values = [
        smooth_churn(sa, sb, y, sc) for sa in scores_a for sb in scores_b
    ]
    measured = float(np.mean(values))
    analytic = expected_smooth_churn_bound(params)
    return check_bound(
        measured,
        analytic,
        "expected_smooth_churn",
        context={
            "beta": params.beta,
            "beta_source": beta_source,
            "n": params.n,
            "gamma": params.gamma,
            "epsilon": params.epsilon,
            "n_pairs": len(values),
            "interpretation": "consistency check"
            if beta_source == "estimated" else "bound check",
            "assumptions": [
                "beta-stable training",
                "membership epsilon stands in for the ramp-loss epsilon",
                "member sets proxy the expectation over dataset draws",
            ],
        },
        tolerance=0.0,
    )
