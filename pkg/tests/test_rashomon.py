import numpy as np
import pytest

from conftest import make_logistic_dataset
from stabaudit.data import make_split
from stabaudit.errors import EmptyRashomonSetError
from stabaudit.models import Classifier, TrainConfig, mean_cross_entropy, train
from stabaudit.rashomon import (
    CandidateGridConfig,
    RashomonConfig,
    RashomonSet,
    constrained_candidates,
    empirical_rashomon,
    fit_baseline,
    membership,
    most_contestable_indices,
)

CFG = TrainConfig(arch="logreg", learning_rate=0.3, epochs=25, l2_penalty=1e-4)


@pytest.fixture(scope="module")
def fitted():
    data = make_logistic_dataset(n=500, d=4, seed=2)
    split = make_split(data.n, 0.25, seed=1)
    baseline = fit_baseline(data, split.train_indices, CFG)
    return data, split, baseline


class TestMembership:
    def test_baseline_is_reflexively_member(self, fitted):
        data, split, baseline = fitted
        ok, value = membership(baseline, baseline, 0.01, "loss_gap",
                               data, split.train_indices)
        assert ok and value == 0.0

    def test_loss_gap_twice_epsilon_rejected(self, fitted):
        data, split, baseline = fitted
        # a visibly worse model: shrink every weight
        worse = Classifier("logreg", {"w": baseline.params["w"] * 0.2})
        _, gap = membership(worse, baseline, 1.0, "loss_gap",
                            data, split.train_indices)
        assert gap > 0
        ok, _ = membership(worse, baseline, gap / 2, "loss_gap",
                           data, split.train_indices)
        assert not ok

    def test_boundary_gap_exactly_epsilon_included(self):
        # fixed predictions: baseline errs on 1 of 8 points, rival on 3,
        # so the accuracy-error gap is exactly 0.25
        X = np.column_stack([np.ones(8), np.array([1, 1, 1, 1, -1, -1, -1, -1.0])])
        y = np.array([1, 1, 1, 0, 0, 0, 0, 1])
        from stabaudit.data import Dataset

        data = Dataset(X=X, y=y, feature_names=["intercept", "x"], provenance={})
        baseline = Classifier("logreg", {"w": np.array([0.0, 5.0])})   # errs on 2
        rival = Classifier("logreg", {"w": np.array([0.0, -5.0])})     # errs on 6
        _, base_err = membership(baseline, None, 1.0, "absolute_accuracy_error",
                                 data, np.arange(8))
        _, rival_err = membership(rival, None, 1.0, "absolute_accuracy_error",
                                  data, np.arange(8))
        gap = rival_err - base_err
        assert gap == 0.5
        ok, value = membership(rival, baseline, 0.5, "accuracy_error_gap",
                               data, np.arange(8))
        assert ok and value == 0.5  # inclusive boundary

    def test_relative_metric_requires_baseline(self, fitted):
        data, split, baseline = fitted
        with pytest.raises(ValueError):
            membership(baseline, None, 0.1, "loss_gap", data, split.train_indices)


class TestEmpiricalRashomon:
    def test_singleton(self, fitted):
        data, split, baseline = fitted
        rc = RashomonConfig(epsilon=0.5, metric="loss_gap", m=1, seeds=(42,))
        rs = empirical_rashomon(data, split.train_indices, rc, CFG, baseline=baseline)
        assert rs.size == 1 and rs.member_ids == ["42"]

    def test_epsilon_zero_absolute_error_empty(self, fitted):
        data, split, baseline = fitted
        rc = RashomonConfig(epsilon=0.0, metric="absolute_accuracy_error",
                            m=2, seeds=(1, 2))
        with pytest.raises(EmptyRashomonSetError):
            empirical_rashomon(data, split.train_indices, rc, CFG)

    def test_rejected_models_counted(self, fitted):
        data, split, baseline = fitted
        # epsilon tiny but positive: some seeds in, typically some out
        rc = RashomonConfig(epsilon=2e-4, metric="loss_gap", m=6,
                            seeds=tuple(range(6)))
        try:
            rs = empirical_rashomon(data, split.train_indices, rc, CFG,
                                    baseline=baseline)
        except EmptyRashomonSetError:
            return  # all rejected is a legitimate outcome at this epsilon
        assert rs.size + len(rs.rejected) == 6

    def test_monotone_in_epsilon(self, fitted):
        data, split, baseline = fitted
        seeds = tuple(range(8))
        small = empirical_rashomon(
            data, split.train_indices,
            RashomonConfig(epsilon=5e-4, metric="loss_gap", m=8, seeds=seeds),
            CFG, baseline=baseline)
        large = empirical_rashomon(
            data, split.train_indices,
            RashomonConfig(epsilon=5e-2, metric="loss_gap", m=8, seeds=seeds),
            CFG, baseline=baseline)
        assert set(small.member_ids) <= set(large.member_ids)

    def test_monotone_in_m(self, fitted):
        data, split, baseline = fitted
        few = empirical_rashomon(
            data, split.train_indices,
            RashomonConfig(epsilon=0.05, metric="loss_gap", m=3, seeds=(1, 2, 3)),
            CFG, baseline=baseline)
        more = empirical_rashomon(
            data, split.train_indices,
            RashomonConfig(epsilon=0.05, metric="loss_gap", m=5,
                           seeds=(1, 2, 3, 4, 5)),
            CFG, baseline=baseline)
        assert set(few.member_ids) <= set(more.member_ids)

    def test_members_reverify_after_round_trip(self, fitted, tmp_path):
        data, split, baseline = fitted
        rs = empirical_rashomon(
            data, split.train_indices,
            RashomonConfig(epsilon=0.05, metric="loss_gap", m=4,
                           seeds=(5, 6, 7, 8)),
            CFG, baseline=baseline)
        rs.save(tmp_path / "rset")
        loaded = RashomonSet.load(tmp_path / "rset")
        assert loaded.size == rs.size
        assert loaded.verify_members(data, split.train_indices)
        assert loaded.member_metrics == pytest.approx(rs.member_metrics, abs=1e-12)

    def test_distinct_seeds_enforced(self):
        with pytest.raises(ValueError):
            RashomonConfig(epsilon=0.1, m=2, seeds=(1, 1))

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError, match="epsilon must be > 0"):
            RashomonConfig(epsilon=-0.1)


class TestConstrainedCandidates:
    def test_grid_cardinality_bound(self, fitted):
        data, split, baseline = fitted
        targets = tuple(int(i) for i in split.test_indices[:4])
        grid = CandidateGridConfig(thresholds=(0.25, 0.5, 0.75),
                                   target_examples=targets)
        rs = constrained_candidates(data, split.train_indices, baseline, grid,
                                    epsilon=0.5)
        assert len(rs.candidate_records) <= len(targets) * 3
        assert rs.size <= len(rs.candidate_records)

    def test_accepted_candidates_satisfy_both_inequalities(self, fitted):
        data, split, baseline = fitted
        X_tr = data.X[split.train_indices]
        y_tr = data.y[split.train_indices]
        base_loss = mean_cross_entropy(baseline, X_tr, y_tr)
        targets = tuple(int(i) for i in split.test_indices[:5])
        grid = CandidateGridConfig(thresholds=(0.4,), target_examples=targets)
        rs = constrained_candidates(data, split.train_indices, baseline, grid,
                                    epsilon=0.1)
        for rec, member in zip(
            [r for r in rs.candidate_records if r.accepted], rs.members
        ):
            h_at_target = float(member.score(data.X[rec.target_index: rec.target_index + 1])[0])
            h0_at_target = float(baseline.score(data.X[rec.target_index: rec.target_index + 1])[0])
            if rec.threshold < h0_at_target:
                assert h_at_target <= rec.threshold + grid.constraint_tolerance
            elif rec.threshold > h0_at_target:
                assert h_at_target >= rec.threshold - grid.constraint_tolerance
            loss = mean_cross_entropy(member, X_tr, y_tr)
            assert loss <= base_loss + 0.1 + 1e-9

    def test_threshold_equal_to_baseline_gives_baseline(self, fitted):
        data, split, baseline = fitted
        i = int(split.test_indices[0])
        p = float(baseline.score(data.X[i:i + 1])[0])
        if not 0.0 < p < 1.0:
            pytest.skip("degenerate probability")
        grid = CandidateGridConfig(thresholds=(p,), target_examples=(i,))
        rs = constrained_candidates(data, split.train_indices, baseline, grid,
                                    epsilon=0.01)
        assert rs.size == 1
        np.testing.assert_array_equal(rs.members[0].params["w"],
                                      baseline.params["w"])
        assert rs.candidate_records[0].metric_value == 0.0

    def test_requires_logistic_architecture(self, fitted):
        data, split, _ = fitted
        mlp = Classifier("mlp", {"W1": np.zeros((5, 2)), "b1": np.zeros(2),
                                 "w2": np.zeros(2), "b2": np.array(0.0)})
        grid = CandidateGridConfig(thresholds=(0.5,), target_examples=(0,))
        with pytest.raises(ValueError, match="logistic"):
            constrained_candidates(data, split.train_indices, mlp, grid, 0.1)

    def test_thresholds_validated(self):
        with pytest.raises(ValueError):
            CandidateGridConfig(thresholds=(0.5, 0.3), target_examples=(0,))
        with pytest.raises(ValueError):
            CandidateGridConfig(thresholds=(0.0, 0.5), target_examples=(0,))


class TestMostContestable:
    def test_picks_scores_nearest_half(self, fitted):
        data, split, baseline = fitted
        idx = most_contestable_indices(baseline, data, split.test_indices, 10)
        scores = baseline.score(data.X)
        chosen = np.abs(scores[idx] - 0.5)
        rest = np.setdiff1d(split.test_indices, idx)
        assert chosen.max() <= np.abs(scores[rest] - 0.5).min() + 1e-12
        assert idx.size == 10
