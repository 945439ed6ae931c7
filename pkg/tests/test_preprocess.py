import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodemo.errors import ConstantColumn, ThresholdOutOfRange
from geodemo.ingest import DistrictCode, RateTable
from geodemo.preprocess import (
    VariableMeta,
    correlation_matrix,
    prune_multicollinear,
    zscore,
)
from helpers import pearson_bruteforce


def rate_table(values, names=None) -> RateTable:
    values = np.asarray(values, dtype=np.float64)
    names = names or [f"v{j}" for j in range(values.shape[1])]
    districts = [DistrictCode(f"E06{i:06d}", f"D{i}") for i in range(values.shape[0])]
    return RateTable(districts=districts, variables=list(names), values=values)


class TestCorrelation:
    def test_self_correlation_is_one(self):
        rng = np.random.default_rng(0)
        corr = correlation_matrix(rate_table(rng.uniform(0, 100, (10, 3))))
        assert np.allclose(np.diag(corr.r), 1.0)

    def test_small_case_matches_hand_formula(self):
        corr = correlation_matrix(rate_table(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 4.0]])))
        expected = pearson_bruteforce([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
        assert corr.pair("v0", "v1") == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.9819805060619659, abs=1e-15)

    def test_perfect_anticorrelation(self):
        x = np.array([1.0, 5.0, 2.0, 9.0])
        corr = correlation_matrix(rate_table(np.c_[x, -x]))
        assert corr.pair("v0", "v1") == pytest.approx(-1.0, abs=1e-12)

    def test_constant_column_rejected(self):
        with pytest.raises(ConstantColumn) as exc:
            correlation_matrix(rate_table(np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]])))
        assert exc.value.variable == "v1"

    def test_too_few_districts(self):
        with pytest.raises(ValueError):
            correlation_matrix(rate_table(np.array([[1.0, 2.0], [3.0, 4.0]])))

    def test_matches_bruteforce_on_random_matrices(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            n = int(rng.integers(4, 30))
            p = int(rng.integers(2, 6))
            data = rng.uniform(0, 100, (n, p))
            corr = correlation_matrix(rate_table(data))
            for i in range(p):
                for j in range(p):
                    expected = pearson_bruteforce(data[:, i].tolist(), data[:, j].tolist())
                    assert corr.r[i, j] == pytest.approx(expected, abs=1e-12)

    def test_p_values_report_significance(self):
        rng = np.random.default_rng(3)
        corr = correlation_matrix(rate_table(rng.uniform(0, 100, (20, 3))))
        assert np.all(corr.p_values >= 0) and np.all(corr.p_values <= 1)
        assert np.allclose(np.diag(corr.p_values), 0.0)
        assert np.allclose(corr.p_values, corr.p_values.T)
        # collinear pair: essentially certain
        x = np.arange(5.0)
        corr2 = correlation_matrix(rate_table(np.c_[x, 2 * x + 1]))
        assert corr2.p_values[0, 1] < 1e-20


class TestPrune:
    def test_eleven_in_eleven_out_below_threshold(self):
        # production-shaped case: 11 variables whose strongest pair sits at
        # 0.695, just under the 0.7 cutoff, so nothing is pruned
        rng = np.random.default_rng(11)
        base = rng.normal(size=40)
        noise = rng.normal(size=40)
        base -= base.mean()
        noise -= noise.mean()
        noise -= noise @ base / (base @ base) * base  # exactly orthogonal
        rho = 0.695
        partner = rho * (base / base.std()) + math.sqrt(1 - rho**2) * (noise / noise.std())
        others = rng.normal(size=(40, 9))
        data = np.c_[base, partner, others]
        corr = correlation_matrix(rate_table(data))
        assert corr.pair("v0", "v1") == pytest.approx(0.695, abs=1e-9)
        assert corr.max_off_diagonal() == pytest.approx(0.695, abs=1e-9)
        kept, removals = prune_multicollinear(corr, 0.7)
        assert len(kept) == 11 and removals == []

    def test_duplicate_column_drops_exactly_one(self):
        x = np.random.default_rng(0).uniform(0, 100, 12)
        corr = correlation_matrix(rate_table(np.c_[x, x, np.random.default_rng(1).uniform(0, 100, 12)]))
        kept, removals = prune_multicollinear(corr, 0.7)
        assert len(removals) == 1
        assert sorted(kept + [removals[0].removed]) == ["v0", "v1", "v2"]

    def test_hub_variable_removed_first(self):
        # r(A,B)=0.9, r(B,C)=0.9, r(A,C)=0.5 -> removing B leaves max 0.5
        r = np.array([[1.0, 0.9, 0.5], [0.9, 1.0, 0.9], [0.5, 0.9, 1.0]])
        from geodemo.preprocess import CorrMatrix

        corr = CorrMatrix(variables=["A", "B", "C"], r=r, p_values=np.zeros((3, 3)))
        kept, removals = prune_multicollinear(corr, 0.7)
        assert kept == ["A", "C"]
        assert removals[0].removed == "B"
        sub = np.abs(r[np.ix_([0, 2], [0, 2])] - np.eye(2))
        assert sub.max() <= 0.5 + 1e-12

    def test_keep_list_is_never_removed(self):
        x = np.random.default_rng(0).uniform(0, 100, 12)
        y = np.random.default_rng(2).uniform(0, 100, 12)
        corr = correlation_matrix(rate_table(np.c_[x, x, y]))
        kept, removals = prune_multicollinear(corr, 0.7, priority=["v1"])
        assert "v1" in kept
        assert removals[0].removed == "v0"

    def test_threshold_validation(self):
        corr = correlation_matrix(rate_table(np.random.default_rng(0).uniform(0, 9, (5, 2))))
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(ThresholdOutOfRange):
                prune_multicollinear(corr, bad)

    def test_postcondition_on_random_data(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            n, p = 30, 6
            latent = rng.normal(size=(n, 2))
            mix = rng.normal(size=(2, p))
            data = latent @ mix + 0.3 * rng.normal(size=(n, p))
            threshold = float(rng.uniform(0.3, 0.95))
            corr = correlation_matrix(rate_table(data))
            kept, _ = prune_multicollinear(corr, threshold)
            assert kept
            idx = [corr.variables.index(v) for v in kept]
            sub = np.abs(corr.r[np.ix_(idx, idx)])
            np.fill_diagonal(sub, 0.0)
            assert sub.max() <= threshold + 1e-12


class TestZscore:
    def test_simple_column(self):
        fm = zscore(rate_table(np.array([[1.0], [2.0], [3.0]])), [VariableMeta(name="v0")])
        assert np.allclose(fm.z[:, 0], [-1.0, 0.0, 1.0], atol=1e-12)

    def test_mean_value_maps_to_zero(self):
        fm = zscore(rate_table(np.array([[2.0], [4.0], [6.0]])), [VariableMeta(name="v0")])
        assert fm.z[1, 0] == pytest.approx(0.0, abs=1e-12)

    def test_constant_column_rejected(self):
        with pytest.raises(ConstantColumn):
            zscore(rate_table(np.array([[5.0], [5.0], [5.0]])), [VariableMeta(name="v0")])

    def test_polarity_inverts_before_scoring(self):
        table = rate_table(np.array([[1.0], [2.0], [3.0]]))
        fm = zscore(table, [VariableMeta(name="v0", polarity="Inverted")])
        assert np.allclose(fm.z[:, 0], [1.0, 0.0, -1.0], atol=1e-12)

    @given(
        st.lists(
            st.floats(min_value=0, max_value=100, allow_nan=False),
            min_size=3,
            max_size=40,
        ).filter(lambda v: max(v) - min(v) > 1e-6)
    )
    @settings(max_examples=60, deadline=None)
    def test_columns_are_standardized(self, values):
        fm = zscore(rate_table(np.array(values)[:, None]), [VariableMeta(name="v0")])
        assert abs(fm.z[:, 0].mean()) < 1e-10
        assert abs(fm.z[:, 0].std(ddof=1) - 1.0) < 1e-10

    def test_affine_invariance(self):
        rng = np.random.default_rng(9)
        values = rng.uniform(0, 100, (25, 1))
        meta = [VariableMeta(name="v0")]
        z1 = zscore(rate_table(values), meta).z
        z2 = zscore(rate_table(0.37 * values + 12.5), meta).z
        assert np.allclose(z1, z2, atol=1e-9)

    def test_provenance_retained(self):
        values = np.array([[10.0], [20.0], [30.0]])
        fm = zscore(rate_table(values), [VariableMeta(name="v0")])
        assert fm.column_means[0] == pytest.approx(20.0)
        assert fm.column_sds[0] == pytest.approx(10.0)
