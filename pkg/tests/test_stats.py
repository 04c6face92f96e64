"""
Unit tests for the statistical engine, with scipy.stats as the independent oracle
"""

import itertools
import math

import numpy as np
import pytest
from scipy import stats as oracle

from tcc_saliency_audit.errors import InputError
from tcc_saliency_audit.stats import (
    TestResult,
    anova,
    benjamini_hochberg,
    cohens_d,
    paired_t,
    pooled_t,
    student_t_cdf,
    studentized_range_cdf,
    studentized_range_critical,
    t_from_summary,
    tukey_hsd,
    welch_t,
)


class TestWelch:
    """Test cases for the Welch t-test."""

    def test_identical_samples(self) -> None:
        result = welch_t([1, 2, 3, 4], [1, 2, 3, 4])
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_large_shift(self) -> None:
        result = welch_t([1, 2, 3, 4], [11, 12, 13, 14])
        assert result.p_value < 0.001
        reference = oracle.ttest_ind([1, 2, 3, 4], [11, 12, 13, 14], equal_var=False)
        assert result.p_value == pytest.approx(reference.pvalue, abs=1e-6)

    def test_matches_reference_on_random_cases(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = rng.normal(0.0, rng.uniform(0.5, 2.0), size=int(rng.integers(2, 8)))
            b = rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 2.0), size=int(rng.integers(2, 8)))
            reference = oracle.ttest_ind(a, b, equal_var=False)
            result = welch_t(a, b)
            assert result.statistic == pytest.approx(reference.statistic, rel=1e-9)
            assert abs(result.p_value - reference.pvalue) < 1e-6

    def test_too_few_observations(self) -> None:
        with pytest.raises(InputError):
            welch_t([1.0], [1.0, 2.0])

    def test_zero_variance(self) -> None:
        with pytest.raises(InputError):
            welch_t([2.0, 2.0], [3.0, 3.0])


class TestSummaryT:
    """Test cases for t-tests from (mean, sd, n) summaries."""

    def test_published_attention_temporal_row(self) -> None:
        result = t_from_summary(2.22, 0.18, 4, 2.90, 0.21, 4)
        assert result.statistic < 0
        assert result.p_value < 0.05

    def test_equal_summaries(self) -> None:
        result = t_from_summary(3.0, 0.5, 4, 3.0, 0.5, 4)
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_matches_raw_samples(self) -> None:
        a, b = np.array([1.0, 2.0, 3.0, 4.0]), np.array([2.0, 4.0, 5.0, 9.0])
        summary = t_from_summary(a.mean(), a.std(ddof=1), 4, b.mean(), b.std(ddof=1), 4)
        raw = welch_t(a, b)
        assert summary.statistic == pytest.approx(raw.statistic, rel=1e-12)
        assert summary.p_value == pytest.approx(raw.p_value, rel=1e-12)

    @pytest.mark.parametrize("args", [
        (1.0, 0.1, 1, 2.0, 0.1, 4),
        (1.0, -0.1, 4, 2.0, 0.1, 4),
        (1.0, 0.0, 4, 2.0, 0.0, 4),
    ])
    def test_invalid_summaries(self, args) -> None:
        with pytest.raises(InputError):
            t_from_summary(*args)


class TestOtherT:
    """Test cases for the t distribution, pooled and paired tests."""

    @pytest.mark.parametrize("t,df", [(0.0, 3.0), (1.3, 4.0), (-2.7, 6.5), (8.0, 2.0)])
    def test_cdf_matches_reference(self, t: float, df: float) -> None:
        assert student_t_cdf(t, df) == pytest.approx(oracle.t.cdf(t, df), abs=1e-10)

    def test_pooled_matches_reference(self) -> None:
        a, b = [2.1, 2.5, 2.2, 2.9], [3.0, 3.4, 2.8, 3.9, 3.1]
        reference = oracle.ttest_ind(a, b, equal_var=True)
        result = pooled_t(a, b)
        assert result.statistic == pytest.approx(reference.statistic, rel=1e-9)
        assert result.p_value == pytest.approx(reference.pvalue, abs=1e-9)

    def test_paired_matches_reference(self) -> None:
        a, b = [2.1, 2.5, 2.2, 2.9], [3.0, 3.4, 2.8, 3.6]
        reference = oracle.ttest_rel(a, b)
        result = paired_t(a, b)
        assert result.statistic == pytest.approx(reference.statistic, rel=1e-9)
        assert result.p_value == pytest.approx(reference.pvalue, abs=1e-9)

    def test_paired_identical(self) -> None:
        assert paired_t([1, 2, 3], [1, 2, 3]).p_value == 1.0

    def test_paired_length_mismatch(self) -> None:
        with pytest.raises(InputError):
            paired_t([1, 2, 3], [1, 2])

    def test_result_roundtrip(self) -> None:
        result = TestResult(statistic=1.5, df=3.0, p_value=0.2, effect_size=0.9).with_adjusted(0.4)
        assert TestResult.from_dict(result.to_dict()) == result
        assert result.decisive_p == 0.4


class TestBenjaminiHochberg:
    """Test cases for Benjamini-Hochberg adjustment."""

    def test_single_p_unchanged(self) -> None:
        assert benjamini_hochberg([0.03]) == [0.03]

    def test_hand_example(self) -> None:
        assert benjamini_hochberg([0.01, 0.02, 0.03, 0.04]) == pytest.approx([0.04] * 4)

    def test_monotone_and_conservative(self) -> None:
        raw = list(np.random.default_rng(1).random(12))
        adjusted = benjamini_hochberg(raw)
        assert all(adj >= p for adj, p in zip(adjusted, raw))
        for i, j in itertools.combinations(range(12), 2):
            if raw[i] <= raw[j]:
                assert adjusted[i] <= adjusted[j]
            else:
                assert adjusted[i] >= adjusted[j]

    def test_input_order_kept(self) -> None:
        assert benjamini_hochberg([0.04, 0.01]) == pytest.approx([0.04, 0.02])

    def test_capped_at_one(self) -> None:
        assert max(benjamini_hochberg([0.9, 0.95, 0.99])) <= 1.0

    def test_out_of_range(self) -> None:
        with pytest.raises(InputError):
            benjamini_hochberg([0.5, 1.5])


class TestCohensD:
    """Test cases for Cohen's d."""

    def test_equal_means(self) -> None:
        assert cohens_d(2.0, 0.3, 2.0, 0.5) == 0.0

    @pytest.mark.parametrize("learned,uniform,expected", [
        ((2.64, 0.37), (10.43, 4.47), 2.46),
        ((2.32, 0.14), (2.74, 0.06), 3.9),
    ])
    def test_published_inputs(self, learned, uniform, expected: float) -> None:
        d = cohens_d(learned[0], learned[1], uniform[0], uniform[1])
        assert d == pytest.approx(expected, abs=0.01)
        assert d > 1

    def test_zero_spread(self) -> None:
        assert cohens_d(1.0, 0.0, 1.0, 0.0) == 0.0
        with pytest.raises(InputError):
            cohens_d(1.0, 0.0, 2.0, 0.0)


class TestAnova:
    """Test cases for the factorial ANOVA."""

    @pytest.fixture
    def two_by_two(self):
        cells = {(0, 0): (1, 3), (0, 1): (5, 7), (1, 0): (2, 4), (1, 1): (10, 12)}
        return [{"a": a, "b": b, "mae": y} for (a, b), ys in cells.items() for y in ys]

    def test_hand_decomposition(self, two_by_two) -> None:
        table = anova(two_by_two, ["a", "b"])
        assert table.total_sum_squares == pytest.approx(106.0, abs=1e-9)
        assert table.row("a").sum_squares == pytest.approx(18.0, abs=1e-9)
        assert table.row("b").sum_squares == pytest.approx(72.0, abs=1e-9)
        assert table.row("a:b").sum_squares == pytest.approx(8.0, abs=1e-9)
        assert table.residual.sum_squares == pytest.approx(8.0, abs=1e-9)
        assert table.residual.df == 4.0
        assert table.row("a").f_value == pytest.approx(9.0)
        assert table.row("b").f_value == pytest.approx(36.0)
        assert table.row("b").p_value == pytest.approx(oracle.f.sf(36.0, 1, 4), rel=1e-9)

    def test_single_factor_is_pooled_t(self) -> None:
        a, b = [2.1, 2.5, 2.2, 2.9], [3.0, 3.4, 2.8, 3.6]
        rows = [{"g": "a", "mae": y} for y in a] + [{"g": "b", "mae": y} for y in b]
        row = anova(rows, ["g"]).row("g")
        t = pooled_t(a, b)
        assert row.f_value == pytest.approx(t.statistic ** 2, rel=1e-9)
        assert row.p_value == pytest.approx(t.p_value, rel=1e-9)

    def test_constant_observations(self, two_by_two) -> None:
        flat = [{**row, "mae": 2.0} for row in two_by_two]
        table = anova(flat, ["a", "b"])
        assert all(row.f_value == 0.0 for row in table.rows)

    def test_unbalanced(self, two_by_two) -> None:
        with pytest.raises(InputError):
            anova(two_by_two[:-1], ["a", "b"])

    def test_single_replicate(self, two_by_two) -> None:
        with pytest.raises(InputError):
            anova(two_by_two[::2], ["a", "b"])

    def test_missing_column(self, two_by_two) -> None:
        with pytest.raises(InputError):
            anova(two_by_two, ["a", "c"])


class TestStudentizedRange:
    """Test cases for the studentized range distribution and Tukey-HSD."""

    def test_published_critical_value(self) -> None:
        assert studentized_range_critical(3, 12, 0.05) == pytest.approx(3.77, abs=0.01)

    def test_cdf_matches_reference(self) -> None:
        assert studentized_range_cdf(3.5, 3, 12) == pytest.approx(
            oracle.studentized_range.cdf(3.5, 3, 12), abs=1e-5)

    def test_cdf_bounds(self) -> None:
        assert studentized_range_cdf(0.0, 3, 10) == 0.0
        assert studentized_range_cdf(50.0, 3, 10) == pytest.approx(1.0, abs=1e-6)

    def test_identical_groups(self) -> None:
        (comparison,) = tukey_hsd([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        assert comparison.result.statistic == 0.0
        assert comparison.result.p_value == 1.0

    def test_two_groups_relate_to_pooled_t(self) -> None:
        a, b = [2.1, 2.5, 2.2, 2.9], [3.0, 3.4, 2.8, 3.6]
        (comparison,) = tukey_hsd([a, b], labels=["a", "b"])
        t = pooled_t(a, b)
        assert comparison.result.statistic == pytest.approx(math.sqrt(2) * abs(t.statistic), rel=1e-9)
        assert comparison.result.p_value == pytest.approx(t.p_value, abs=1e-4)
        assert (comparison.group_a, comparison.group_b) == ("a", "b")

    def test_three_groups_give_three_pairs(self) -> None:
        comparisons = tukey_hsd([[1, 2, 3], [2, 3, 4], [7, 8, 9]])
        assert len(comparisons) == 3
        far = comparisons[1]
        assert far.mean_difference == pytest.approx(-6.0)
        assert far.result.p_value < 0.01

    def test_group_too_small(self) -> None:
        with pytest.raises(InputError):
            tukey_hsd([[1.0], [2.0, 3.0]])
