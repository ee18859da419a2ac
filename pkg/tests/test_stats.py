import math

import numpy as np
import pytest
from scipy import stats as sps
from scipy.integrate import quad

from srtlab.stats import StatsError, anova_oneway, tukey_hsd


def anova_textbook(groups):
    """Direct sum-of-squares recomputation, kept deliberately naive."""
    all_values = [x for g in groups for x in g]
    grand = sum(all_values) / len(all_values)
    ss_between = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ss_within = sum((x - sum(g) / len(g)) ** 2 for g in groups for x in g)
    df_b = len(groups) - 1
    df_w = len(all_values) - len(groups)
    f = (ss_between / df_b) / (ss_within / df_w)
    return f, float(sps.f.sf(f, df_b, df_w))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(240)
_Z_NODES = 8.0 * _GL_NODES          # inner integral over z in [-8, 8]
_Z_WEIGHTS = 8.0 * _GL_WEIGHTS
_Z_PDF = sps.norm.pdf(_Z_NODES)
_Z_CDF = sps.norm.cdf(_Z_NODES)


def studentized_range_sf_oracle(q, k, df):
    """P(Q > q) by direct double quadrature, independent of scipy's own
    studentized-range implementation (only generic quadrature and the
    normal distribution are borrowed)."""

    def range_cdf(r):
        if r <= 0:
            return 0.0
        inner = _Z_PDF * (sps.norm.cdf(_Z_NODES + r) - _Z_CDF) ** (k - 1)
        return k * float(np.dot(_Z_WEIGHTS, inner))

    # density of S = sqrt(chi2_df / df)
    log_c = math.log(2.0) + (df / 2.0) * math.log(df / 2.0) - math.lgamma(df / 2.0)

    def s_density(s):
        return math.exp(log_c + (df - 1) * math.log(s) - df * s * s / 2.0)

    cdf, _ = quad(lambda s: s_density(s) * range_cdf(q * s), 0.0, 6.0, limit=200)
    return 1.0 - cdf


class TestAnova:
    def test_identical_groups_give_null_result(self):
        result = anova_oneway([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        assert result.f == 0.0
        assert result.p_value == 1.0

    def test_degrees_of_freedom_layout(self):
        rng = np.random.default_rng(50)
        groups = [list(rng.normal(0, 1, 5428)), list(rng.normal(0.5, 1, 5428))]
        result = anova_oneway(groups)
        assert result.df_between == 1
        assert result.df_within == 10854

    def test_matches_textbook_recomputation(self):
        rng = np.random.default_rng(51)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            groups = [list(rng.normal(rng.normal(0, 1), 1.0,
                                      int(rng.integers(4, 12))))
                      for _ in range(k)]
            result = anova_oneway(groups)
            f_ref, p_ref = anova_textbook(groups)
            assert result.f == pytest.approx(f_ref, rel=1e-9)
            assert result.p_value == pytest.approx(p_ref, rel=1e-9, abs=1e-300)

    def test_matches_scipy_f_oneway(self):
        rng = np.random.default_rng(52)
        groups = [list(rng.normal(i * 0.3, 1.0, 10)) for i in range(3)]
        result = anova_oneway(groups)
        ref = sps.f_oneway(*groups)
        assert result.f == pytest.approx(float(ref.statistic), rel=1e-12)
        assert result.p_value == pytest.approx(float(ref.pvalue), rel=1e-9)

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(53)
        groups = [list(rng.normal(i, 1.0, 8)) for i in range(3)]
        base = anova_oneway(groups)
        shifted = anova_oneway([[x + 42.0 for x in g] for g in groups])
        scaled = anova_oneway([[x * -3.7 for x in g] for g in groups])
        assert shifted.f == pytest.approx(base.f, rel=1e-9)
        assert scaled.f == pytest.approx(base.f, rel=1e-9)

    def test_zero_within_variance_is_flagged(self):
        result = anova_oneway([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
        assert result.degenerate
        assert result.p_value == 0.0
        assert math.isinf(result.f)

    def test_input_validation(self):
        with pytest.raises(StatsError):
            anova_oneway([[1.0, 2.0]])
        with pytest.raises(StatsError):
            anova_oneway([[1.0], []])
        with pytest.raises(StatsError):
            anova_oneway([[1.0], [2.0]])


class TestTukey:
    def test_equal_means_nothing_significant(self):
        rng = np.random.default_rng(54)
        base = list(rng.normal(0, 1, 12))
        result = tukey_hsd([base, list(base), list(base)])
        assert result.significant_pairs() == []

    def test_only_shifted_group_stands_out(self):
        rng = np.random.default_rng(55)
        groups = [list(rng.normal(0, 1.0, 10)) for _ in range(3)]
        groups.append([x + 10.0 for x in groups[0]])
        result = tukey_hsd(groups)
        flagged = result.significant_pairs()
        assert flagged
        assert all(3 in pair for pair in flagged)

    def test_adjusted_p_matches_quadrature_oracle(self):
        rng = np.random.default_rng(56)
        groups = [list(rng.normal(0.4 * i, 1.0, 8)) for i in range(4)]
        result = tukey_hsd(groups)
        df = sum(len(g) for g in groups) - len(groups)
        for comp in result.comparisons:
            oracle = studentized_range_sf_oracle(comp.q, len(groups), df)
            assert comp.p_adjusted == pytest.approx(oracle, abs=1e-3)

    def test_matches_scipy_tukey_hsd(self):
        rng = np.random.default_rng(57)
        groups = [list(rng.normal(0.5 * i, 1.0, 9)) for i in range(3)]
        ours = tukey_hsd(groups)
        ref = sps.tukey_hsd(*groups)
        for comp in ours.comparisons:
            assert comp.p_adjusted == pytest.approx(
                float(ref.pvalue[comp.group_a, comp.group_b]), abs=1e-9
            )
            assert comp.mean_difference == pytest.approx(
                float(np.mean(groups[comp.group_a]) - np.mean(groups[comp.group_b])),
                rel=1e-12,
            )

    def test_pair_symmetry_up_to_sign(self):
        rng = np.random.default_rng(58)
        groups = [list(rng.normal(i, 1.0, 6)) for i in range(3)]
        result = tukey_hsd(groups)
        by_pair = {(c.group_a, c.group_b): c for c in result.comparisons}
        assert set(by_pair) == {(0, 1), (0, 2), (1, 2)}

    def test_unbalanced_groups_accepted(self):
        rng = np.random.default_rng(59)
        groups = [list(rng.normal(0, 1, 5)), list(rng.normal(0, 1, 9)),
                  list(rng.normal(4, 1, 7))]
        result = tukey_hsd(groups)
        assert len(result.comparisons) == 3
