import numpy as np
import pytest
from scipy.stats import multivariate_normal

from budgeted_tuning.curve_env import CurveSet
from budgeted_tuning.gp import BeliefState, GPHypers


def ft_ref(t, t2, alpha, beta, mag):
    return mag**2 * beta**alpha / (t + t2 + beta) ** alpha


def kx_ref(h: GPHypers, X):
    K = X.shape[0]
    if h.independent:
        return h.x_magnitude**2 * np.eye(K)
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    return h.x_magnitude**2 * np.exp(-0.5 * d2 / h.x_lengthscale**2)


class DenseOracle:
    """Joint Gaussian over (observed y, asymptotes f, query points), built element by element."""

    def __init__(self, h: GPHypers, X, arms, ts, ys, m):
        self.h, self.X, self.m = h, X, m
        self.arms, self.ts, self.ys = np.asarray(arms), np.asarray(ts, float), np.asarray(ys, float)
        self.Kx = kx_ref(h, X)
        n = self.ts.size
        S = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                same = self.arms[i] == self.arms[j]
                S[i, j] = (ft_ref(self.ts[i], self.ts[j], h.ft_alpha, h.ft_beta, h.time_magnitude) if same else 0.0)
                S[i, j] += self.Kx[self.arms[i], self.arms[j]] + (h.noise_std**2 if i == j else 0.0)
        self.S = S

    def loglik(self):
        return multivariate_normal(np.full(self.ts.size, self.m), self.S).logpdf(self.ys)

    def _condition(self, cross, prior_cov, prior_mean):
        sol = np.linalg.solve(self.S, np.column_stack([self.ys - self.m, cross]))
        mean = prior_mean + cross.T @ sol[:, 0]
        cov = prior_cov - cross.T @ sol[:, 1:]
        return mean, cov

    def asymptote(self):
        cross = self.Kx[self.arms, :]  # (n, K)
        mean, cov = self._condition(cross, self.Kx, np.full(self.Kx.shape[0], self.m))
        return mean, np.diag(cov)

    def predict(self, arm, t_star):
        h = self.h
        cross = np.array(
            [
                (ft_ref(t_star, t, h.ft_alpha, h.ft_beta, h.time_magnitude) if a == arm else 0.0) + self.Kx[arm, a]
                for a, t in zip(self.arms, self.ts)
            ]
        )[:, None]
        prior = ft_ref(t_star, t_star, h.ft_alpha, h.ft_beta, h.time_magnitude) + self.Kx[arm, arm]
        mean, cov = self._condition(cross, np.array([[prior]]), np.array([self.m]))
        return float(mean[0]), float(cov[0, 0])


def random_hypers(rng, independent=None, noise_low=1e-2):
    return GPHypers(
        ft_alpha=rng.uniform(0.5, 3.0),
        ft_beta=rng.uniform(0.5, 10.0),
        time_magnitude=rng.uniform(0.1, 2.0),
        x_lengthscale=rng.uniform(0.2, 2.0),
        x_magnitude=rng.uniform(0.1, 2.0),
        independent=bool(rng.random() < 0.5) if independent is None else independent,
        mean=float(rng.uniform(-1, 1)),
        noise_std=rng.uniform(noise_low, 0.3),
    )


def random_instance(rng, max_arms=3, max_epochs=5, independent=None, want_unseen=False):
    """A belief with random data (K <= 3, <= 5 epochs per arm) and its dense oracle."""
    while True:
        K = int(rng.integers(1, max_arms + 1))
        counts = rng.integers(0, max_epochs + 1, size=K)
        if counts.sum() == 0:
            continue
        if want_unseen and (K < 2 or np.all(counts > 0)):
            continue
        break
    h = random_hypers(rng, independent)
    X = rng.uniform(0, 1, size=(K, 1))
    b = BeliefState(K, h, X)
    arms, ts, ys = [], [], []
    for k in range(K):
        epochs = np.sort(rng.choice(np.arange(1, 9), size=counts[k], replace=False))
        for t in epochs:
            y = float(rng.normal(0.3, 0.5))
            b.update(k, y, epoch=int(t))
            arms.append(k), ts.append(t), ys.append(y)
    # BeliefState keeps arm-major, epoch-ascending order, the same as here
    return b, DenseOracle(h, X, arms, ts, ys, h.mean)


@pytest.fixture
def crossing_set():
    return CurveSet(curves=([0.9, 0.5, 0.4], [0.6, 0.55, 0.52]))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
