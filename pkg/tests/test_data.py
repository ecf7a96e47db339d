import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabaudit.data import (
    Dataset,
    SchemaConfig,
    UpdateRegime,
    featurize,
    load_csv,
    make_split,
    subsample_for_regime,
)
from stabaudit.errors import (
    DegenerateSplitError,
    MissingTargetError,
    NonBinaryTargetError,
    RaggedRowError,
)
from stabaudit.synth import (
    CENSUS_TARGET,
    CREDIT_TARGET,
    write_census_like_csv,
    write_credit_like_csv,
)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


class TestLoadCsv:
    def test_toy_two_rows_maps_yes_to_one(self, tmp_path):
        p = write_lines(tmp_path / "t.csv", ["a,label", "1,yes", "2,no"])
        raw = load_csv(p, "label")
        assert raw.n == 2
        assert raw.label_mapping == {"no": 0, "yes": 1}

    def test_positive_label_override(self, tmp_path):
        p = write_lines(tmp_path / "t.csv", ["a,label", "1,yes", "2,no"])
        raw = load_csv(p, "label", SchemaConfig(positive_label="no"))
        assert raw.label_mapping == {"no": 1, "yes": 0}

    def test_three_target_values_rejected(self, tmp_path):
        p = write_lines(tmp_path / "t.csv", ["a,label", "1,x", "2,y", "3,z"])
        with pytest.raises(NonBinaryTargetError) as e:
            load_csv(p, "label")
        assert e.value.values == ["x", "y", "z"]

    def test_missing_target_column(self, tmp_path):
        p = write_lines(tmp_path / "t.csv", ["a,b", "1,2"])
        with pytest.raises(MissingTargetError):
            load_csv(p, "label")

    def test_ragged_row(self, tmp_path):
        p = write_lines(tmp_path / "t.csv", ["a,label", "1,yes", "2"])
        with pytest.raises(RaggedRowError) as e:
            load_csv(p, "label")
        assert e.value.row_index == 1

    def test_rows_with_missing_target_dropped(self, tmp_path):
        p = write_lines(tmp_path / "t.csv", ["a,label", "1,yes", "2,", "3,no"])
        raw = load_csv(p, "label")
        assert raw.n == 2
        assert raw.n_dropped_missing_target == 1

    def test_census_shape(self, tmp_path):
        p = write_census_like_csv(tmp_path / "census.csv", n=2500, seed=1)
        raw = load_csv(p, CENSUS_TARGET)
        assert raw.n == 2500
        assert raw.label_mapping == {"no": 0, "yes": 1}


class TestFeaturize:
    def test_census_feature_count(self, tmp_path):
        p = write_census_like_csv(tmp_path / "census.csv", n=2500, seed=1)
        raw = load_csv(p, CENSUS_TARGET)
        ds = featurize(raw)
        assert ds.d == 28
        assert ds.X[:, 0].tolist() == [1.0] * ds.n

    def test_credit_shape(self, tmp_path):
        p = write_credit_like_csv(tmp_path / "credit.csv", n=30000, seed=1)
        raw = load_csv(p, CREDIT_TARGET)
        ds = featurize(raw)
        assert ds.n == 30000
        assert ds.d == 23

    def test_single_numeric_column_standardized(self, tmp_path):
        p = write_lines(
            tmp_path / "t.csv", ["x,label", "1,yes", "2,no", "3,yes"]
        )
        ds = featurize(load_csv(p, "label"))
        col = ds.X[:, 1]
        assert col.mean() == pytest.approx(0.0, abs=1e-12)
        assert col.var() == pytest.approx(1.0, abs=1e-12)  # population variance

    def test_standardization_uses_train_stats_only(self, tmp_path):
        lines = ["x,label"] + [f"{v},{l}" for v, l in
                               zip(range(10), "yes no".split() * 5)]
        p = write_lines(tmp_path / "t.csv", lines)
        raw = load_csv(p, "label")
        split = make_split(10, 0.3, seed=0)
        ds = featurize(raw, split)
        vals = np.arange(10.0)
        train_vals = vals[split.train_indices]
        mean, std = train_vals.mean(), train_vals.std()
        for i in split.test_indices:
            assert ds.X[i, 1] == pytest.approx((vals[i] - mean) / std, abs=1e-12)

    def test_constant_column_dropped_with_warning(self, tmp_path):
        p = write_lines(
            tmp_path / "t.csv",
            ["x,c,label", "1,same,yes", "2,same,no", "3,same,yes"],
        )
        raw = load_csv(p, "label")
        with pytest.warns(UserWarning, match="constant"):
            ds = featurize(raw)
        assert ds.d == 1
        assert ds.provenance["dropped_constant_columns"] == ["c"]

    def test_missing_categorical_becomes_category(self, tmp_path):
        p = write_lines(
            tmp_path / "t.csv",
            ["c,label", "a,yes", "?,no", "b,yes", "a,no"],
        )
        ds = featurize(load_csv(p, "label", SchemaConfig(categorical_columns=("c",))))
        assert any("(missing)" in n for n in ds.feature_names)

    def test_missing_numeric_gets_train_median(self, tmp_path):
        p = write_lines(
            tmp_path / "t.csv",
            ["x,label", "1,yes", "?,no", "3,yes", "5,no"],
        )
        raw = load_csv(p, "label", SchemaConfig(numeric_columns=("x",)))
        ds = featurize(raw)
        # median of {1,3,5} = 3 -> imputed row standardizes like a 3
        filled = ds.X[:, 1]
        expect = (np.array([1.0, 3.0, 3.0, 5.0]) - np.mean([1, 3, 3, 5])) / np.std(
            [1, 3, 3, 5]
        )
        np.testing.assert_allclose(filled, expect, atol=1e-12)

    def test_determinism(self, tmp_path):
        p = write_census_like_csv(tmp_path / "census.csv", n=800, seed=5)
        raw = load_csv(p, CENSUS_TARGET)
        split = make_split(raw.n, 0.2, seed=11)
        a = featurize(raw, split)
        b = featurize(raw, split)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        assert a.provenance["preprocessing_hash"] == b.provenance["preprocessing_hash"]

    def test_cache_round_trip(self, tmp_path):
        p = write_census_like_csv(tmp_path / "census.csv", n=500, seed=5)
        ds = featurize(load_csv(p, CENSUS_TARGET))
        cache = tmp_path / "ds.npz"
        ds.save(cache)
        loaded = Dataset.load(cache)
        assert np.array_equal(loaded.X, ds.X)
        assert np.array_equal(loaded.y, ds.y)
        assert loaded.feature_names == ds.feature_names
        assert loaded.provenance == ds.provenance


class TestSplit:
    def test_cardinality(self):
        split = make_split(10, 0.2, seed=0)
        assert split.test_indices.size == 2
        assert split.train_indices.size == 8

    def test_deterministic(self):
        a = make_split(100, 0.3, seed=42)
        b = make_split(100, 0.3, seed=42)
        assert np.array_equal(a.train_indices, b.train_indices)
        assert np.array_equal(a.test_indices, b.test_indices)

    def test_degenerate(self):
        with pytest.raises(DegenerateSplitError):
            make_split(1, 0.5, seed=0)

    @given(st.integers(2, 300), st.floats(0.05, 0.95), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_disjoint_exhaustive(self, n, frac, seed):
        try:
            split = make_split(n, frac, seed)
        except DegenerateSplitError:
            assert int(n * frac) in (0, n)
            return
        merged = np.concatenate([split.train_indices, split.test_indices])
        assert np.array_equal(np.sort(merged), np.arange(n))


class TestRegimes:
    def test_large_and_small_sizes(self):
        split = make_split(1250, 0.2, seed=1)
        assert split.train_indices.size == 1000
        large = subsample_for_regime(split, UpdateRegime.large(seed=9))
        small = subsample_for_regime(split, UpdateRegime.small(seed=9))
        assert large.size == 500
        assert small.size == 950
        assert np.all(np.isin(large, split.train_indices))
        assert np.all(np.isin(small, split.train_indices))

    def test_full_fraction_is_identity(self):
        split = make_split(50, 0.2, seed=1)
        out = subsample_for_regime(split, UpdateRegime("full", 1.0, seed=3))
        assert np.array_equal(out, split.train_indices)

    def test_deterministic(self):
        split = make_split(200, 0.25, seed=2)
        r = UpdateRegime.large(seed=77)
        assert np.array_equal(
            subsample_for_regime(split, r), subsample_for_regime(split, r)
        )

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            UpdateRegime("x", 0.0, seed=1)
