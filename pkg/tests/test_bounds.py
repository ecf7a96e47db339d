import math

import numpy as np
import pytest

from conftest import make_logistic_dataset
from stabaudit.data import make_split
from stabaudit.errors import InsufficientPairsError
from stabaudit.models import Classifier, TrainConfig, train
from stabaudit.bounds import (
    StabilityParams,
    beta_closed_form_lr,
    beta_estimate,
    check_bound,
    churn_sum_bound,
    expected_smooth_churn_bound,
    max_feature_norm,
    rashomon_churn_bound,
    smooth_churn_theorem_check,
    zero_churn_diff_test,
)

CFG = TrainConfig(arch="logreg", learning_rate=0.3, epochs=20, l2_penalty=1e-3)


class TestClosedForms:
    def test_churn_sum_worst_case(self):
        # two models at 90% and 91% accuracy can disagree on at most 19%
        assert churn_sum_bound(0.10, 0.09) == pytest.approx(0.19, abs=1e-15)

    def test_churn_sum_boundaries(self):
        assert churn_sum_bound(0.0, 0.0) == 0.0
        assert churn_sum_bound(0.5, 0.5) == 1.0

    def test_rashomon_bound(self):
        assert rashomon_churn_bound(0.1, 0.01) == pytest.approx(0.21, abs=1e-15)
        assert rashomon_churn_bound(0.0, 0.05) == 0.05

    def test_expected_smooth_churn_value(self):
        # sqrt(pi * 1e4) = 177.2453850905516, so the bound is
        # 0.001 * 177.2453850905516 / 0.1 + 0.02
        params = StabilityParams(beta=0.001, n=10000, gamma=0.1, epsilon=0.01)
        assert expected_smooth_churn_bound(params) == pytest.approx(
            1.792453850905516, abs=1e-12
        )

    def test_zero_beta_gives_two_epsilon(self):
        params = StabilityParams(beta=0.0, n=500, gamma=0.2, epsilon=0.03)
        assert expected_smooth_churn_bound(params) == pytest.approx(0.06, abs=1e-15)

    def test_algebraic_identity_at_matched_gamma(self):
        beta, n = 0.02, 400
        params = StabilityParams(beta=beta, n=n,
                                 gamma=beta * math.sqrt(math.pi * n), epsilon=0.0)
        assert expected_smooth_churn_bound(params) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_each_parameter(self):
        rng = np.random.default_rng(4)
        for _ in range(60):
            beta = rng.uniform(1e-4, 0.1)
            n = int(rng.integers(10, 10000))
            gamma = rng.uniform(0.01, 1.0)
            eps = rng.uniform(1e-4, 0.1)
            base = expected_smooth_churn_bound(StabilityParams(beta, n, gamma, eps))
            up = rng.uniform(1.01, 2.0)
            assert expected_smooth_churn_bound(
                StabilityParams(beta * up, n, gamma, eps)) > base
            assert expected_smooth_churn_bound(
                StabilityParams(beta, int(n * 2), gamma, eps)) > base
            assert expected_smooth_churn_bound(
                StabilityParams(beta, n, gamma, eps * up)) > base
            assert expected_smooth_churn_bound(
                StabilityParams(beta, n, gamma * up, eps)) < base

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            StabilityParams(beta=-1e-9, n=10, gamma=0.1, epsilon=0.01)
        with pytest.raises(ValueError):
            StabilityParams(beta=0.0, n=0, gamma=0.1, epsilon=0.01)


class TestCheckBound:
    def test_satisfied_with_slack(self):
        rep = check_bound(0.05, 0.21, "example")
        assert rep.satisfied
        assert rep.slack == pytest.approx(0.16, abs=1e-15)

    def test_violation(self):
        rep = check_bound(0.3, 0.21, "example")
        assert not rep.satisfied
        assert rep.slack < 0

    def test_boundary_equality_satisfied(self):
        rep = check_bound(0.21, 0.21, "example")
        assert rep.satisfied and rep.slack == 0.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            check_bound(float("nan"), 1.0, "bad")


class TestBetaEstimate:
    def test_constant_family_is_zero(self, toy_data, toy_split):
        constant = Classifier("logreg", {"w": np.zeros(toy_data.X.shape[1])})
        est = beta_estimate(
            toy_data, toy_split.train_indices, CFG, trials=3, seed=0,
            trainer=lambda d, i, c: constant,
        )
        assert est == 0.0

    def test_reproducible_and_prefix_monotone(self, toy_data, toy_split):
        one = beta_estimate(toy_data, toy_split.train_indices, CFG, trials=1, seed=9)
        one_again = beta_estimate(toy_data, toy_split.train_indices, CFG,
                                  trials=1, seed=9)
        four = beta_estimate(toy_data, toy_split.train_indices, CFG, trials=4, seed=9)
        assert one == one_again
        assert four >= one

    def test_estimate_decreases_with_heavier_regularization(self):
        # well-separated penalties and near-converged training keep the
        # single-replacement sensitivity trend out of the Monte-Carlo noise
        data = make_logistic_dataset(n=800, d=4, seed=6)
        split = make_split(data.n, 0.25, seed=0)
        estimates = []
        for l2 in (0.01, 0.3, 3.0):
            cfg = TrainConfig(arch="logreg", learning_rate=0.1, epochs=60,
                              l2_penalty=l2)
            estimates.append(
                beta_estimate(data, split.train_indices, cfg, trials=4, seed=5)
            )
        assert estimates[0] >= estimates[1] >= estimates[2]

    def test_trials_must_be_positive(self, toy_data, toy_split):
        with pytest.raises(ValueError):
            beta_estimate(toy_data, toy_split.train_indices, CFG, trials=0)

    def test_closed_form_lr(self):
        assert beta_closed_form_lr(2.0, 0.1, 100) == pytest.approx(0.4, abs=1e-15)
        with pytest.raises(ValueError):
            beta_closed_form_lr(2.0, 0.0, 100)

    def test_max_feature_norm(self, toy_data):
        norms = np.linalg.norm(toy_data.X, axis=1)
        assert max_feature_norm(toy_data) == norms.max()


class TestZeroChurnDiff:
    def test_insufficient_pairs(self, toy_data, toy_split):
        b = train(toy_data, toy_split.train_indices, CFG)
        with pytest.raises(InsufficientPairsError):
            zero_churn_diff_test(toy_data, toy_split.train_indices, b, CFG,
                                 pairs=1, eval_indices=toy_split.test_indices)

    def test_degenerate_same_seed_pairs_are_exactly_zero(self, toy_data, toy_split):
        b = train(toy_data, toy_split.train_indices, CFG)
        rep = zero_churn_diff_test(
            toy_data, toy_split.train_indices, b, CFG,
            pairs=3, eval_indices=toy_split.test_indices, seed=1,
            trainer=lambda d, i, c: train(d, i, c.with_seed(0)),
        )
        assert rep.diffs == [0.0, 0.0, 0.0]
        assert rep.mean == 0.0 and rep.contains_zero

    def test_report_shape(self, toy_data, toy_split):
        b = train(toy_data, toy_split.train_indices, CFG)
        rep = zero_churn_diff_test(toy_data, toy_split.train_indices, b, CFG,
                                   pairs=4, eval_indices=toy_split.test_indices,
                                   seed=3)
        assert len(rep.diffs) == 4 and len(rep.pair_seeds) == 4
        assert rep.standard_error >= 0
        d = rep.to_dict()
        assert set(d) >= {"mean", "standard_error", "contains_zero", "n_pairs"}


class TestTheoremCheck:
    def test_report_structure_and_labeling(self, toy_data, toy_split):
        models_a = [train(toy_data, toy_split.train_indices, CFG.with_seed(s))
                    for s in (1, 2)]
        models_b = [train(toy_data, toy_split.train_indices, CFG.with_seed(s))
                    for s in (3, 4)]
        params = StabilityParams(beta=0.05, n=toy_split.train_indices.size,
                                 gamma=0.1, epsilon=0.05)
        rep = smooth_churn_theorem_check(
            models_a, models_b, toy_data, toy_split.test_indices, params,
            beta_source="estimated",
        )
        assert rep.bound_name == "expected_smooth_churn"
        assert rep.context["interpretation"] == "consistency check"
        assert rep.context["n_pairs"] == 4
        assert math.isfinite(rep.measured_value)
        assert rep.analytic_value == pytest.approx(
            expected_smooth_churn_bound(params), abs=1e-15
        )
