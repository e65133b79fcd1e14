import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from suffmdp.core import TrajectoryDataset
from suffmdp.dcov import (
    InsufficientDataError,
    dcov_permutation_pvalue,
    dcov_statistic,
    default_pool_order,
    lrt_independence_pvalue,
    pooled_pvalue,
    stratified_pooled_test,
)
from suffmdp.rng import substream
from suffmdp.simgen import GenerativeModelSpec, sample_trajectories


def brute_force_dcov(x, y):
    """Definitional double-centered double sum, written as plain loops."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 1:
        x = x.T
    if y.shape[0] == 1:
        y = y.T
    m = x.shape[0]
    a = np.zeros((m, m))
    b = np.zeros((m, m))
    for j in range(m):
        for k in range(m):
            a[j, k] = np.linalg.norm(x[j] - x[k])
            b[j, k] = np.linalg.norm(y[j] - y[k])

    def center(d):
        out = np.zeros_like(d)
        for j in range(m):
            for k in range(m):
                out[j, k] = d[j, k] - d[j].mean() - d[:, k].mean() + d.mean()
        return out

    a_c, b_c = center(a), center(b)
    total = 0.0
    for j in range(m):
        for k in range(m):
            total += a_c[j, k] * b_c[j, k]
    return total / (m * m)


class TestDcovStatistic:
    def test_constant_y_gives_zero(self):
        x = np.arange(6.0)
        y = np.full(6, 3.14)
        assert dcov_statistic(x, y) == 0.0

    def test_matches_brute_force_small_case(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        assert dcov_statistic(x, x) == pytest.approx(brute_force_dcov(x, x), abs=1e-12)

    def test_scales_exactly_with_y(self):
        rng = substream(5)
        x = rng.normal(size=(12, 2))
        base = dcov_statistic(x, x)
        for c in (2.0, 0.5, 4.0):  # powers of two scale without roundoff
            assert dcov_statistic(x, c * x) == c * base

    def test_scaling_near_exact_for_general_factor(self):
        rng = substream(6)
        x = rng.normal(size=(10, 1))
        assert dcov_statistic(x, 3.0 * x) == pytest.approx(
            3.0 * dcov_statistic(x, x), rel=1e-12
        )

    def test_matches_brute_force_on_random_instances(self):
        rng = substream(7)
        for _ in range(100):
            m = int(rng.integers(2, 21))
            d1 = int(rng.integers(1, 5))
            d2 = int(rng.integers(1, 5))
            x = rng.normal(size=(m, d1))
            y = x[:, :1] * rng.normal(size=(m, d2)) + rng.normal(size=(m, d2))
            assert dcov_statistic(x, y) == pytest.approx(
                brute_force_dcov(x, y), abs=1e-12
            )

    def test_nonnegative_and_translation_invariant(self):
        rng = substream(8)
        for _ in range(20):
            x = rng.normal(size=(9, 2))
            y = rng.normal(size=(9, 3))
            v = dcov_statistic(x, y)
            assert v >= 0.0
            shifted = dcov_statistic(x + 17.0, y - 3.0)
            assert shifted == pytest.approx(v, abs=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            dcov_statistic(np.array([1.0]), np.array([2.0]))
        with pytest.raises(ValueError):
            dcov_statistic(np.array([1.0, np.nan]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            dcov_statistic(np.arange(3.0), np.arange(4.0))


class TestPermutationPvalue:
    def test_perfect_dependence_reaches_minimum(self):
        rng = substream(9)
        x = rng.normal(size=(50, 1))
        report = dcov_permutation_pvalue(x, x, n_permutations=199, rng=3)
        assert report.p_value == pytest.approx(1 / 200)

    def test_single_permutation_p_in_half_or_one(self):
        rng = substream(10)
        for seed in range(10):
            x = rng.normal(size=(8, 1))
            y = rng.normal(size=(8, 1))
            report = dcov_permutation_pvalue(x, y, n_permutations=1, rng=seed)
            assert report.p_value in (0.5, 1.0)

    def test_level_under_independence(self):
        # 200 replicates of independent Gaussians: rejection rate at 0.1
        # should sit near 0.1.
        rejections = 0
        for rep in range(200):
            rng = substream(1000 + rep)
            x = rng.normal(size=(30, 1))
            y = rng.normal(size=(30, 1))
            report = dcov_permutation_pvalue(x, y, n_permutations=199, rng=rep)
            rejections += report.p_value <= 0.1
        assert 0.05 <= rejections / 200 <= 0.15

    def test_deterministic_given_seed(self):
        rng = substream(11)
        x = rng.normal(size=(20, 2))
        y = rng.normal(size=(20, 2))
        r1 = dcov_permutation_pvalue(x, y, n_permutations=99, rng=42)
        r2 = dcov_permutation_pvalue(x, y, n_permutations=99, rng=42)
        assert r1.p_value == r2.p_value
        assert r1.statistic == r2.statistic

    def test_pvalue_invariant_to_positive_scaling(self):
        rng = substream(12)
        x = rng.normal(size=(25, 2))
        y = rng.normal(size=(25, 1))
        base = dcov_permutation_pvalue(x, y, n_permutations=199, rng=9)
        for c in (2.0, 8.0, 0.25):
            scaled = dcov_permutation_pvalue(c * x, y, n_permutations=199, rng=9)
            assert scaled.p_value == base.p_value

    def test_report_serializes(self):
        rng = substream(13)
        x = rng.normal(size=(10, 1))
        report = dcov_permutation_pvalue(x, x, n_permutations=19, rng=1)
        payload = report.to_jsonable()
        assert set(payload) >= {"statistic", "p_value", "strata", "u", "B", "seed"}
        assert payload["B"] == 19


class TestLikelihoodRatioTest:
    def test_uniform_table_gives_p_one(self):
        x = np.repeat([0, 0, 1, 1], 10)
        y = np.tile(np.repeat([0, 1], 10), 2)
        report = lrt_independence_pvalue(x, y)
        assert report.statistic == pytest.approx(0.0, abs=1e-12)
        assert report.p_value == pytest.approx(1.0)

    def test_diagonal_table_matches_closed_form(self):
        # table [[20, 0], [0, 20]]: G = 80 * ln 2, p far below 1e-6
        x = np.repeat([0, 1], 20)
        report = lrt_independence_pvalue(x, x)
        assert report.statistic == pytest.approx(80 * np.log(2), rel=1e-12)
        assert report.p_value < 1e-6

    def test_single_level_margin_flagged(self):
        x = np.zeros(10, dtype=int)
        y = np.arange(10) % 2
        report = lrt_independence_pvalue(x, y)
        assert report.p_value == 1.0
        assert "degenerate-margin" in report.flags


class TestPooledPvalue:
    def test_bonferroni_case(self):
        assert pooled_pvalue([0.02, 0.5, 0.3, 0.7, 0.9], u=1) == pytest.approx(0.10)

    def test_default_order_rule(self):
        # floor(T/20) + 1 at T=90 gives 5; pooled = 90 * p_(5) / 5
        assert default_pool_order(90) == 5
        ps = [0.004] * 5 + [0.5] * 85
        assert pooled_pvalue(ps, u=5) == pytest.approx(90 * 0.004 / 5)

    def test_all_ones_capped(self):
        assert pooled_pvalue([1.0, 1.0, 1.0], u=2) == 1.0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            pooled_pvalue([], u=1)
        with pytest.raises(ValueError):
            pooled_pvalue([0.5, 1.2], u=1)
        with pytest.raises(ValueError):
            pooled_pvalue([0.5, 0.5], u=3)

    @settings(max_examples=60, deadline=None)
    @given(
        ps=st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=12),
        data=st.data(),
    )
    def test_monotone_and_order_invariant(self, ps, data):
        u = data.draw(st.integers(min_value=1, max_value=len(ps)))
        base = pooled_pvalue(ps, u)
        shuffled = list(ps)
        order = data.draw(st.permutations(range(len(ps))))
        assert pooled_pvalue([shuffled[i] for i in order], u) == base
        idx = data.draw(st.integers(min_value=0, max_value=len(ps) - 1))
        bumped = list(ps)
        bumped[idx] = min(1.0, bumped[idx] + data.draw(
            st.floats(min_value=0, max_value=1 - bumped[idx])
        ))
        assert pooled_pvalue(bumped, u) >= base


def _dataset_with_columns(g_col, h_col, actions, utilities=None):
    """Two-column dataset whose screening inputs are the given arrays."""
    n, t_plus_1 = g_col.shape
    states = np.stack([g_col, h_col], axis=2)
    if utilities is None:
        utilities = np.zeros((n, t_plus_1 - 1))
    return TrajectoryDataset(
        states=states, actions=actions, utilities=utilities, n_actions=int(actions.max())
    )


class TestStratifiedPooledTest:
    def test_single_time_single_action_equals_single_p(self):
        rng = substream(20)
        g = rng.normal(size=(30, 2))
        h = rng.normal(size=(30, 2))
        actions = np.ones((30, 1), dtype=int)
        ds = _dataset_with_columns(g, h, actions)
        report = stratified_pooled_test(
            lambda d, t: d.states[:, t - 1, 0],
            lambda d, t: d.states[:, t - 1, 1],
            ds,
            n_permutations=99,
            seed=3,
        )
        assert len(report.strata) == 1
        assert report.p_value == report.strata[0].p_value
        assert report.pooled_u == 1

    def test_null_level_with_time_dependence(self):
        # G and H are independent of each other but each is a random walk
        # over time, so per-time p-values are dependent; pooling must stay
        # valid for both u = 1 and the default order.
        horizon = 40
        for u in (1, None):
            rejections = 0
            for rep in range(200):
                rng = substream(3000 + rep)
                g = np.cumsum(rng.normal(size=(20, horizon + 1)), axis=1)
                h = np.cumsum(rng.normal(size=(20, horizon + 1)), axis=1)
                actions = np.ones((20, horizon), dtype=int)
                ds = _dataset_with_columns(g, h, actions)
                report = stratified_pooled_test(
                    lambda d, t: d.states[:, t - 1, 0],
                    lambda d, t: d.states[:, t - 1, 1],
                    ds,
                    n_permutations=39,
                    seed=rep,
                    pool_order=u,
                )
                rejections += report.p_value <= 0.1
            assert rejections / 200 <= 0.15

    def test_power_against_utility_dependence(self):
        # Utility depends on the first state coordinate by construction.
        rejections = 0
        for rep in range(20):
            ds = sample_trajectories(
                GenerativeModelSpec("linear", 0, seed=rep), 30, 90
            )
            report = stratified_pooled_test(
                lambda d, t: d.utilities[:, t - 1],
                lambda d, t: d.states[:, t - 1, 0],
                ds,
                n_permutations=999,
                seed=rep,
                tau=0.1,
            )
            rejections += report.p_value <= 0.1
        assert rejections >= 18

    def test_insufficient_strata_raises(self):
        rng = substream(21)
        g = rng.normal(size=(4, 3))
        h = rng.normal(size=(4, 3))
        actions = np.ones((4, 2), dtype=int)
        ds = _dataset_with_columns(g, h, actions)
        with pytest.raises(InsufficientDataError):
            stratified_pooled_test(
                lambda d, t: d.states[:, t - 1, 0],
                lambda d, t: d.states[:, t - 1, 1],
                ds,
                min_stratum=5,
            )

    def test_small_strata_excluded_from_bonferroni(self):
        rng = substream(22)
        g = rng.normal(size=(12, 2))
        h = rng.normal(size=(12, 2))
        actions = np.concatenate(
            [np.ones((10, 1), dtype=int), np.full((2, 1), 2, dtype=int)]
        )
        ds = _dataset_with_columns(g, h, actions)
        report = stratified_pooled_test(
            lambda d, t: d.states[:, t - 1, 0],
            lambda d, t: d.states[:, t - 1, 1],
            ds,
            n_permutations=99,
            seed=0,
            min_stratum=5,
        )
        assert [s.action for s in report.strata] == [1]
