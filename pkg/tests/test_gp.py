import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgeted_tuning.curve_env import CurveSet
from budgeted_tuning.gp import (
    BeliefConfig,
    BeliefState,
    GaussianScalar,
    GPHypers,
    make_belief,
    refresh_hypers,
    slice_sample,
    slice_sample_hypers,
)
from budgeted_tuning.kernels import ft_kernel

from conftest import DenseOracle, ft_ref, random_instance


def belief_with(h, data, K=None, X=None):
    """``data`` maps arm -> list of (epoch, loss)."""
    K = K or max(data) + 1
    b = BeliefState(K, h, X)
    for k, obs in data.items():
        for t, y in obs:
            b.update(k, y, epoch=t)
    return b


def oracle_of(b: BeliefState):
    arms, ts, ys = b.observations()
    X = b.features if b.features is not None else np.arange(b.n_arms, dtype=float)[:, None]
    return DenseOracle(b.bag[0], X, arms, ts, ys, b.components[0].m)


class TestFTKernel:
    def test_origin(self):
        assert ft_kernel(0, 0, 1.5, 5.0, 1.0) == 1.0

    def test_value(self):
        # (5/7)**1.5 at 30 digits
        assert ft_kernel(1, 1, 1.5, 5.0, 1.0) == pytest.approx(0.603681610520368983935441662404, abs=1e-15)

    @given(st.floats(0.1, 5), st.floats(0.1, 20), st.floats(0.1, 5))
    def test_decreasing(self, a, b, mag):
        assert ft_kernel(2, 3, a, b, mag) < ft_kernel(1, 1, a, b, mag)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_symmetric_psd(self, seed):
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 50, size=int(rng.integers(2, 20)))
        a, b = rng.uniform(0.3, 4), rng.uniform(0.3, 15)
        K = ft_kernel(t[:, None], t[None, :], a, b, 1.0)
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8


class TestJointCov:
    def test_scalar(self):
        h = GPHypers(time_magnitude=0.7, x_magnitude=0.4, noise_std=0.1)
        b = belief_with(h, {0: [(1, 0.2)]})
        expect = ft_ref(1, 1, 1.5, 5.0, 0.7) + 0.4**2 + 0.1**2
        assert b.joint_cov().shape == (1, 1)
        assert b.joint_cov()[0, 0] == pytest.approx(expect, rel=1e-14)

    def test_independent_blocks_are_zero(self):
        b = belief_with(GPHypers(), {0: [(1, 0.2), (2, 0.1)], 1: [(1, 0.5)]})
        S = b.joint_cov()
        assert np.all(S[:2, 2:] == 0) and np.all(S[2:, :2] == 0)

    def test_matches_elementwise(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            b, oracle = random_instance(rng)
            np.testing.assert_allclose(b.joint_cov(), oracle.S, atol=1e-12)

    def test_needs_data(self):
        with pytest.raises(ValueError):
            BeliefState(2).joint_cov()


class TestLogLikelihood:
    def test_standard_normal(self):
        # k_t(1,1) + x_mag^2 = 1 with zero noise and mean 0
        kt = ft_ref(1, 1, 1.5, 5.0, 1.0)
        h = GPHypers(time_magnitude=math.sqrt(0.5 / kt), x_magnitude=math.sqrt(0.5), noise_std=0.0, mean=0.0)
        b = belief_with(h, {0: [(1, 0.0)]})
        assert b.log_likelihood() == pytest.approx(-0.918938533204672741780329736406, abs=1e-14)

    def test_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            b, oracle = random_instance(rng)
            assert abs(b.log_likelihood() - oracle.loglik()) < 1e-8

    def test_huge_noise_flattens_differences(self):
        rng = np.random.default_rng(2)
        b, _ = random_instance(rng, independent=True)
        gaps = []
        for noise in (0.1, 10.0, 1000.0):
            h1 = replace(b.base_hypers, noise_std=noise)
            h2 = replace(h1, ft_alpha=h1.ft_alpha * 2, ft_beta=h1.ft_beta * 2)
            gaps.append(abs(b.log_likelihood_of(h1) - b.log_likelihood_of(h2)))
            o1, o2 = oracle_of(b.copy().set_hypers(h1)), oracle_of(b.copy().set_hypers(h2))
            assert gaps[-1] == pytest.approx(abs(o1.loglik() - o2.loglik()), abs=1e-8)
        assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-6


class TestPosteriorAsymptote:
    def test_unobserved_independent_arm_is_prior(self):
        h = GPHypers(x_magnitude=0.6, mean=0.25)
        b = belief_with(h, {0: [(1, 0.9), (2, 0.7)]}, K=3)
        post = b.posterior_asymptote()
        assert post[2] == GaussianScalar(0.25, 0.6)

    def test_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            b, oracle = random_instance(rng)
            mean, var = oracle.asymptote()
            post = b.posterior_asymptote()
            np.testing.assert_allclose([p.mean for p in post], mean, atol=1e-8)
            np.testing.assert_allclose([p.var for p in post], var, atol=1e-8)

    def test_observation_never_widens(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            b, _ = random_instance(rng)
            arm = int(rng.integers(b.n_arms))
            before = b.posterior_asymptote()[arm].var
            b.update(arm, float(rng.normal()))
            assert b.posterior_asymptote()[arm].var <= before + 1e-12


class TestPredictSeen:
    def test_noiseless_interpolation(self):
        h = GPHypers(noise_std=0.0, mean=0.0)
        b = belief_with(h, {0: [(1, 0.8), (2, 0.6), (3, 0.55)]})
        p = b.predict_seen(0, 2)
        assert p.mean == pytest.approx(0.6, abs=1e-7)
        assert p.var < 1e-7

    def test_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            b, oracle = random_instance(rng)
            for k in b.seen_arms():
                t_star = b.last_epoch(k) + int(rng.integers(1, 6))
                mean, var = oracle.predict(k, t_star)
                p = b.predict_seen(int(k), t_star)
                assert abs(p.mean - mean) < 1e-8 and abs(p.var - var) < 1e-8

    def test_far_future_tends_to_asymptote(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            b, _ = random_instance(rng)
            k = int(b.seen_arms()[0])
            assert b.predict_seen(k, 1e9).mean == pytest.approx(b.posterior_asymptote()[k].mean, abs=1e-3)

    def test_wrong_kind(self):
        b = belief_with(GPHypers(), {0: [(1, 0.5)]}, K=2)
        with pytest.raises(ValueError):
            b.predict_seen(1, 2)
        with pytest.raises(ValueError):
            b.predict_unseen(0, 2)


class TestPredictUnseen:
    def test_independent_is_prior(self):
        h = GPHypers(time_magnitude=0.5, x_magnitude=0.3, mean=0.1)
        b = belief_with(h, {0: [(1, 0.9)]}, K=2)
        p = b.predict_unseen(1, 4)
        assert p.mean == 0.1
        assert p.var == pytest.approx(ft_ref(4, 4, 1.5, 5.0, 0.5) + 0.09, rel=1e-14)

    def test_oracle_correlated(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            b, oracle = random_instance(rng, independent=False, want_unseen=True)
            for k in range(b.n_arms):
                if b.n_seen(k):
                    continue
                t_star = int(rng.integers(1, 10))
                mean, var = oracle.predict(k, t_star)
                p = b.predict_unseen(k, t_star)
                assert abs(p.mean - mean) < 1e-8 and abs(p.var - var) < 1e-8

    def test_twin_of_observed_arm(self):
        h = GPHypers(independent=False, x_lengthscale=0.5, noise_std=0.05, mean=0.5)
        X = np.array([[0.3], [0.3]])
        b = BeliefState(2, h, X)
        for t in range(1, 41):
            b.update(0, 0.2 + 0.3 / t)
        twin = b.predict_unseen(1, 5).mean
        assert twin == pytest.approx(b.posterior_asymptote()[0].mean, abs=1e-3)
        mean, _ = oracle_of(b).predict(1, 5)
        assert twin == pytest.approx(mean, abs=1e-8)


class TestUpdate:
    def test_cache_consistency(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            b, _ = random_instance(rng)
            fresh = b.rebuilt()
            for c, f in zip(b.components, fresh.components):
                np.testing.assert_allclose(c.lam, f.lam, atol=1e-9)
                np.testing.assert_allclose(c.gamma, f.gamma, atol=1e-9)
                np.testing.assert_allclose(c.C, f.C, atol=1e-9)
                np.testing.assert_allclose(c.mu_f, f.mu_f, atol=1e-9)
            # and against Lambda / gamma written out with dense inverses
            c = b.components[0]
            for k in b.seen_arms():
                t = np.asarray(b.epochs[k], float)
                h = b.base_hypers
                Kt = ft_ref(t[:, None], t[None, :], h.ft_alpha, h.ft_beta, h.time_magnitude) + h.noise_std**2 * np.eye(t.size)
                Ki = np.linalg.inv(Kt)
                assert c.lam[k] == pytest.approx(Ki.sum(), abs=1e-9)
                assert c.gamma[k] == pytest.approx(Ki.sum(0) @ (np.array(b.losses[k]) - c.m), abs=1e-9)

    def test_grouping_is_a_permutation(self):
        rng = np.random.default_rng(9)
        b = BeliefState(3, GPHypers())
        traj = []
        for _ in range(12):
            a, y = int(rng.integers(3)), float(rng.random())
            b.update(a, y)
            traj.append((a, y))
        arms, _, ys = b.observations()
        assert sorted(zip(arms.tolist(), ys.tolist())) == sorted(traj)

    def test_predictive_mean_observation_changes_nothing(self):
        h = GPHypers(noise_std=0.0, mean=0.4)
        b = belief_with(h, {0: [(1, 0.9), (2, 0.7)], 1: [(1, 0.6)]})
        probes = [(0, 4), (0, 7), (1, 3), (1, 6)]
        before = [b.predict(k, t).mean for k, t in probes]
        y3 = b.predict(0, 3).mean
        b.update(0, y3, epoch=3)
        assert b.predict(0, 3).mean == pytest.approx(y3, abs=1e-9)
        np.testing.assert_allclose([b.predict(k, t).mean for k, t in probes], before, atol=1e-8)

    def test_variance_drops_at_updated_epoch(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            b, _ = random_instance(rng)
            k = int(rng.integers(b.n_arms))
            t = b.last_epoch(k) + 1
            before = b.predict(k, t).var
            b.update(k, float(rng.normal()), epoch=t)
            assert b.predict(k, t).var < before

    def test_rejects_bad_input(self):
        b = BeliefState(1)
        with pytest.raises(ValueError):
            b.update(0, math.nan)
        b.update(0, 0.5)
        with pytest.raises(ValueError):
            b.update(0, 0.4, epoch=1)


class TestVarianceProperties:
    def test_independent_of_values(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            b, _ = random_instance(rng)
            other = b.copy()
            for k in range(b.n_arms):
                other.losses[k] = list(rng.normal(size=len(other.losses[k])))
                for c in other.components:
                    c.refresh_arm(k, other.epochs[k], other.losses[k])
            other._finish()
            for k in range(b.n_arms):
                assert other.predict(k, 9).var == pytest.approx(b.predict(k, 9).var, abs=1e-12)

    def test_non_increasing_with_observations(self):
        rng = np.random.default_rng(12)
        h = GPHypers(noise_std=0.05)
        b = BeliefState(2, h)
        prev = b.predict(0, 30).var
        for t in range(1, 15):
            b.update(0, float(rng.random()))
            v = b.predict(0, 30).var
            assert v <= prev + 1e-12
            prev = v

    def test_never_negative(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            b, _ = random_instance(rng, )
            for k in range(b.n_arms):
                mean, var = b.predict_curve(k, np.arange(1, 12))
                assert np.all(var >= 0)


class TestMixture:
    def test_bag_moments(self):
        hs = [GPHypers(ft_alpha=1.0), GPHypers(ft_alpha=2.5, time_magnitude=0.6)]
        data = {0: [(1, 0.8), (2, 0.6)], 1: [(1, 0.4)]}
        bag = belief_with(hs, data)
        parts = [belief_with(h, data).predict(0, 5) for h in hs]
        m = np.mean([p.mean for p in parts])
        v = np.mean([p.var + p.mean**2 for p in parts]) - m**2
        p = bag.predict(0, 5)
        assert p.mean == pytest.approx(m, abs=1e-14)
        assert p.var == pytest.approx(v, abs=1e-14)


class TestFutureCurve:
    def test_single_step(self):
        b = belief_with(GPHypers(), {0: [(1, 0.8), (2, 0.6)]})
        assert b.expected_future_curve(0, 1)[0] == b.predict(0, 3).mean

    def test_unseen_independent_is_flat(self):
        b = belief_with(GPHypers(mean=0.3), {0: [(1, 0.8)]}, K=2)
        assert np.all(b.expected_future_curve(1, 6) == 0.3)
        tau, nu = b.future_best(1, 6)
        assert tau == 1 and nu.mean == 0.3

    def test_decaying_curve(self):
        h = GPHypers(noise_std=1e-3, mean=0.2, time_magnitude=0.5)
        b = belief_with(h, {0: [(t, 0.2 + 0.6 / (1 + t)) for t in range(1, 6)]})
        seq = b.expected_future_curve(0, 20)
        oracle = oracle_of(b)
        np.testing.assert_allclose(seq, [oracle.predict(0, 5 + i)[0] for i in range(1, 21)], atol=1e-8)
        assert np.all(np.diff(seq) <= 1e-12)
        tau, _ = b.future_best(0, 20)
        assert tau == 20

    def test_brute_force_argmin(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            b, _ = random_instance(rng)
            k = int(rng.integers(b.n_arms))
            r = int(rng.integers(1, 15))
            t0 = b.last_epoch(k)
            means = [b.predict(k, t0 + i).mean for i in range(1, r + 1)]
            tau, nu = b.future_best(k, r)
            assert tau == int(np.argmin(means)) + 1
            p = b.predict(k, t0 + tau)
            assert nu.mean == pytest.approx(p.mean, abs=1e-12) and nu.std == pytest.approx(p.std, abs=1e-12)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            BeliefState(1).future_best(0, 0)


class TestSliceSampling:
    def test_standard_normal(self):
        rng = np.random.default_rng(0)
        s, failed = slice_sample(lambda x: -0.5 * float(x @ x), [2.0], rng, step=1.0, n_samples=10_000, burn_in=50, max_attempts=50)
        x = s[:, 0]
        assert failed == 0
        # batch means give an honest standard error under autocorrelation
        se = x.reshape(100, 100).mean(1).std(ddof=1) / 10
        assert abs(x.mean()) < 3 * se
        assert abs(x.var() - 1) < 0.1

    def test_give_up_keeps_value(self):
        spike = lambda x: 0.0 if abs(x[0] - 0.3) < 1e-9 else -np.inf
        s, failed = slice_sample(spike, [0.3], np.random.default_rng(0), n_samples=5, burn_in=0)
        assert failed == 5 and np.all(s == 0.3)

    def _data(self, h, seed=0, K=3, T=12):
        cs = CurveSet(curves=tuple(np.zeros(T) for _ in range(K)))
        b = make_belief(cs, BeliefConfig(hypers=h))
        rng = np.random.default_rng(seed)
        t = np.arange(1, T + 1, dtype=float)
        L = np.linalg.cholesky(
            ft_ref(t[:, None], t[None, :], h.ft_alpha, h.ft_beta, h.time_magnitude) + h.noise_std**2 * np.eye(T)
        )
        for k in range(K):
            y = h.mean + h.x_magnitude * rng.standard_normal() + L @ rng.standard_normal(T)
            for v in y:
                b.update(k, float(v))
        return b

    def test_deterministic(self):
        b = self._data(GPHypers(mean=0.0))
        a1 = slice_sample_hypers(b, seed=3, n_samples=4, burn_in=2)
        a2 = slice_sample_hypers(b, seed=3, n_samples=4, burn_in=2)
        assert a1 == a2 and len(a1) == 4

    def test_prefers_true_hypers(self):
        h = GPHypers(ft_alpha=1.5, ft_beta=2.0, time_magnitude=0.8, x_magnitude=0.5, mean=0.0, noise_std=0.02)
        b = self._data(h, seed=1)
        bag, failed = slice_sample_hypers(b, seed=0, return_failures=True)
        ll = [b.log_likelihood_of(s) for s in bag]
        perturbed = replace(h, ft_alpha=2 * h.ft_alpha, ft_beta=2 * h.ft_beta)
        assert np.median(ll) >= b.log_likelihood_of(perturbed)
        assert failed >= 0

    def test_refresh_cadence(self):
        b = self._data(GPHypers(mean=0.0), T=4, K=2)
        cfg = BeliefConfig(sample_hypers=True, resample_every=5, n_samples=3, burn_in=1)
        rng = np.random.default_rng(0)
        refresh_hypers(b, cfg, 4, rng)
        assert len(b.bag) == 1
        refresh_hypers(b, cfg, 5, rng)
        assert len(b.bag) == 3

    def test_needs_data(self):
        with pytest.raises(ValueError):
            slice_sample_hypers(BeliefState(2))
