import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsens.errors import DataError
from rsens.predictive import Bernoulli, Gaussian, Poisson, StudentT, fisher_information
from rsens.sensitivity import (
    ParamSensitivity,
    aggregate_global,
    default_fd_step,
    kl_finite_difference,
    rank_features,
    rsens2_all,
    rsens2_local,
    rsens_all,
    rsens_local,
)

finite = st.floats(-10, 10)
positive = st.floats(0.05, 10)


def gaussian_sens():
    return st.builds(
        lambda m, v, g: ParamSensitivity(Gaussian(m, v), np.array(g).reshape(3, 2), {(0, 1): np.array(g[:2])}),
        finite, positive, st.lists(finite, min_size=6, max_size=6),
    )


class TestParamSensitivity:
    def test_wrong_length_rejected(self):
        with pytest.raises(DataError):
            ParamSensitivity(Gaussian(0, 1), np.zeros((2, 3)))

    def test_asymmetric_cross_rejected(self):
        with pytest.raises(DataError):
            ParamSensitivity(Gaussian(0, 1), np.zeros((2, 2)), {(0, 1): [1.0, 0.0], (1, 0): [2.0, 0.0]})

    def test_missing_cross(self):
        s = ParamSensitivity(Gaussian(0, 1), np.zeros((2, 2)))
        with pytest.raises(KeyError):
            rsens2_local(s, 0, 1)


class TestRsensLocal:
    def test_zero_gradient(self):
        for dist in (Gaussian(1, 2), StudentT(0, 1, 3), Bernoulli(0.4), Poisson(2)):
            s = ParamSensitivity(dist, np.zeros((1, dist.n_params)))
            assert rsens_local(s, 0) == 0.0

    def test_unit_mean_slope(self):
        s = ParamSensitivity(Gaussian(0, 1), [[1.0, 0.0]])
        assert rsens_local(s, 0) == 1.0

    def test_matches_kl_finite_difference(self):
        # predictive whose parameters move linearly with x: lambda(x) = lambda0 + g x
        lam0 = np.array([0.5, 2.0])
        g = np.array([0.3, -0.1])
        s = ParamSensitivity(Gaussian(*lam0), g[None, :])
        fd = kl_finite_difference(lambda x: Gaussian(*(lam0 + g * x[0])), np.zeros(1), 0, 1e-4)
        assert fd == pytest.approx(rsens_local(s, 0), rel=1e-3)

    def test_index_out_of_range(self):
        s = ParamSensitivity(Gaussian(0, 1), [[1.0, 0.0]])
        with pytest.raises(IndexError):
            rsens_local(s, 1)

    def test_bad_alpha(self):
        s = ParamSensitivity(Gaussian(0, 1), [[1.0, 0.0]])
        with pytest.raises(ValueError):
            rsens_local(s, 0, alpha=0)

    @given(gaussian_sens(), st.floats(0.01, 100))
    def test_alpha_scaling_exact(self, s, alpha):
        for d in range(3):
            assert rsens_local(s, d, alpha) == math.sqrt(alpha) * rsens_local(s, d, 1.0)

    @given(gaussian_sens(), st.floats(0.01, 100))
    def test_ranks_alpha_invariant(self, s, alpha):
        a = rank_features(dict(enumerate(rsens_all(s, alpha))))
        b = rank_features(dict(enumerate(rsens_all(s, 1.0))))
        assert a.ranks == b.ranks

    @given(gaussian_sens(), st.sampled_from([0.5, 2.0, 3.0, 10.0]))
    def test_gradient_scaling(self, s, c):
        scaled = ParamSensitivity(s.dist, c * s.grad)
        for d in range(3):
            assert rsens_local(scaled, d) == pytest.approx(c * rsens_local(s, d), rel=1e-14)

    @given(gaussian_sens())
    def test_all_matches_local(self, s):
        np.testing.assert_allclose(rsens_all(s), [rsens_local(s, d) for d in range(3)], rtol=1e-13)


class TestRsens2:
    def test_zero(self):
        s = ParamSensitivity(Gaussian(0, 1), np.zeros((2, 2)), {(0, 1): [0.0, 0.0]})
        assert rsens2_local(s, 0, 1) == 0.0

    def test_unit(self):
        s = ParamSensitivity(Gaussian(0, 1), np.zeros((2, 2)), {(0, 1): [2.0, 0.0]})
        assert rsens2_local(s, 0, 1) == 2.0

    def test_symmetric(self):
        s = ParamSensitivity(StudentT(0, 2, 5), np.zeros((2, 3)), {(0, 1): [0.4, -1.2, 0.0]})
        assert rsens2_local(s, 0, 1) == rsens2_local(s, 1, 0)

    @given(
        st.sampled_from([Gaussian(0.3, 1.7), StudentT(1, 0.5, 4), Bernoulli(0.3), Poisson(6)]),
        st.lists(finite, min_size=3, max_size=3),
        st.floats(0.1, 5),
    )
    def test_double_loop_oracle(self, dist, h, alpha):
        h = np.array(h[: dist.n_params])
        if dist.n_params == 3:
            h[2] = 0.0
        s = ParamSensitivity(dist, np.zeros((2, dist.n_params)), {(0, 1): h})
        I = fisher_information(dist)
        q = sum(h[k] * I[k, l] * h[l] for k in range(len(h)) for l in range(len(h)))
        assert rsens2_local(s, 0, 1, alpha) ** 2 == pytest.approx(alpha * q, rel=1e-12, abs=1e-300)

    def test_all_reports_each_pair_once(self):
        s = ParamSensitivity(Gaussian(0, 1), np.zeros((3, 2)), {(0, 1): [1, 0], (1, 0): [1, 0], (2, 1): [0, 1]})
        out = rsens2_all(s)
        assert set(out) == {(0, 1), (1, 2)}


class TestFiniteDifference:
    def test_constant_predictive(self):
        assert kl_finite_difference(lambda x: Gaussian(1.0, 2.0), np.zeros(2), 1, 1e-4) == 0.0

    @pytest.mark.parametrize("beta,v", [(2.0, 1.0), (-0.5, 3.0), (1e-3, 0.1)])
    def test_linear_gaussian_limit(self, beta, v):
        # KL of equal-variance Gaussians is exact: sqrt(2 * (beta delta)^2 / (2v)) / delta = |beta| / sqrt(v)
        val = kl_finite_difference(lambda x: Gaussian(beta * x[0], v), np.array([0.7]), 0, 1e-4)
        assert val == pytest.approx(abs(beta) / math.sqrt(v), rel=1e-9)

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            kl_finite_difference(lambda x: Gaussian(0, 1), np.zeros(1), 0, 0.0)

    def test_default_step(self):
        X = np.column_stack([np.arange(5.0), np.zeros(5)])
        np.testing.assert_allclose(default_fd_step(X), [1e-4 * np.std(np.arange(5.0)), 1e-8])


class TestAggregationAndRanking:
    def test_aggregate(self):
        assert aggregate_global([0, 0, 0]) == 0
        assert aggregate_global([1, 2, 3]) == 2
        beta = -1.7
        assert aggregate_global([abs(beta)] * 40) == abs(beta)
        with pytest.raises(DataError):
            aggregate_global([])

    def test_rank_simple(self):
        assert rank_features({1: 5.0, 2: 3.0}).ranks == {1: 1, 2: 2}

    def test_rank_ties_by_key(self):
        assert rank_features({2: 1.0, 1: 1.0}).ranks == {1: 1, 2: 2}

    def test_rank_pairs_unit(self):
        rep = rank_features({(0, 1): 0.2, (1, 2): 0.9})
        assert rep.unit == "pair"
        assert rep.ordered() == [(1, 2), (0, 1)]

    def test_rank_empty(self):
        with pytest.raises(DataError):
            rank_features({})

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=12), st.randoms(use_true_random=False))
    def test_relabel_equivariance(self, scores, rnd):
        keys = list(range(len(scores)))
        perm = keys[:]
        rnd.shuffle(perm)
        base = rank_features(dict(zip(keys, scores)))
        relabeled = rank_features({perm[k]: s for k, s in zip(keys, scores)})
        distinct = len(set(scores)) == len(scores)
        if distinct:
            assert all(relabeled.ranks[perm[k]] == base.ranks[k] for k in keys)
        assert sorted(relabeled.ranks.values()) == list(range(1, len(scores) + 1))
