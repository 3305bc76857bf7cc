"""Freeze-Thaw Gaussian-process belief over a set of learning curves.

Generative model, per arm ``k`` with observed epochs ``t_k``::

    f ~ N(m 1, K_x)                      # asymptotes, one per arm
    y_k | f ~ N(f_k 1, K_tk + s^2 I)     # curve around its asymptote

``K_tk`` uses the Freeze-Thaw kernel ``a^2 beta^alpha / (t + t' + beta)^alpha``.
Because the curves are conditionally independent given ``f``, everything is
computed from per-arm Cholesky factors plus one K x K solve for the
asymptote posterior::

    Lambda = O^T K_t^-1 O                 (diagonal)
    gamma  = O^T K_t^-1 (y - O m)
    C      = (K_x^-1 + Lambda)^-1
    mu_f   = m + C gamma

Predictions are for the latent curve value; observation noise is left out
unless asked for.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from scipy.linalg import solve_triangular

from ._linalg import cho_solve, jittered_cholesky, logdet_from_cholesky
from .kernels import ft_kernel, se_gram

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GPHypers:
    """Hyper-parameters of the belief.

    ``independent=True`` makes ``K_x = x_magnitude**2 * I``; otherwise ``K_x``
    is a squared-exponential kernel over the arm features. ``mean=None``
    means "use the mean of all losses observed so far".
    """

    ft_alpha: float = 1.5
    ft_beta: float = 5.0
    time_magnitude: float = 0.3
    x_lengthscale: float = 1.0
    x_magnitude: float = 0.3
    independent: bool = True
    mean: float | None = None
    noise_std: float = 1e-3

    def __post_init__(self):
        for name in ("ft_alpha", "ft_beta", "time_magnitude", "x_lengthscale", "x_magnitude"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GPHypers":
        return cls(**d)


@dataclass(frozen=True)
class GaussianScalar:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std >= 0:
            raise ValueError("std must be >= 0")

    @property
    def var(self) -> float:
        return self.std**2


def _clamp_var(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < -1e-10 * np.maximum(1.0, np.abs(v).max(initial=0.0))):
        logger.debug("negative predictive variance %s clamped", v.min())
    return np.maximum(v, 0.0)


class _Component:
    """Posterior under one fixed setting of the hyper-parameters."""

    def __init__(self, hypers: GPHypers, n_arms: int, features):
        self.hypers = hypers
        self.n_arms = n_arms
        h = hypers
        if h.independent:
            self.Kx = np.eye(n_arms) * h.x_magnitude**2
        else:
            X = features if features is not None else np.arange(n_arms, dtype=float)[:, None]
            self.Kx = se_gram(X, h.x_lengthscale, h.x_magnitude)
        self.L = [None] * n_arms
        self.Kinv_y = [None] * n_arms
        self.Kinv_1 = [None] * n_arms
        self.lam = np.zeros(n_arms)
        self.sum_Kinv_y = np.zeros(n_arms)
        self.quad_y = np.zeros(n_arms)  # y^T K^-1 y per arm
        self.logdet_t = np.zeros(n_arms)

    def kt(self, t, t2):
        h = self.hypers
        return ft_kernel(t, t2, h.ft_alpha, h.ft_beta, h.time_magnitude)

    def refresh_arm(self, k, epochs, losses):
        if len(epochs) == 0:
            self.L[k] = self.Kinv_y[k] = self.Kinv_1[k] = None
            self.lam[k] = self.sum_Kinv_y[k] = self.quad_y[k] = self.logdet_t[k] = 0.0
            return
        t = np.asarray(epochs, dtype=float)
        y = np.asarray(losses, dtype=float)
        K = self.kt(t[:, None], t[None, :]) + self.hypers.noise_std**2 * np.eye(t.size)
        L = jittered_cholesky(K)
        self.L[k] = L
        self.Kinv_y[k] = cho_solve(L, y)
        self.Kinv_1[k] = cho_solve(L, np.ones(t.size))
        self.lam[k] = self.Kinv_1[k].sum()
        self.sum_Kinv_y[k] = self.Kinv_y[k].sum()
        self.quad_y[k] = y @ self.Kinv_y[k]
        self.logdet_t[k] = logdet_from_cholesky(L)

    def finish(self, m):
        """Asymptote posterior given the per-arm caches and prior mean ``m``."""
        self.m = m
        self.gamma = self.sum_Kinv_y - self.lam * m
        s = np.sqrt(self.lam)
        if self.hypers.independent:
            v = np.diag(self.Kx)
            self.B_logdet = float(np.sum(np.log1p(v * self.lam)))
            self.C = np.diag(v / (1.0 + v * self.lam))
        else:
            B = np.eye(self.n_arms) + s[:, None] * self.Kx * s[None, :]
            LB = jittered_cholesky(B)
            self.B_logdet = logdet_from_cholesky(LB)
            KS = self.Kx * s[None, :]
            V = solve_triangular(LB, KS.T, lower=True, check_finite=False)  # LB^-1 S Kx
            self.C = self.Kx - V.T @ V
        self.mu_f = m + self.C @ self.gamma
        self._unseen_cache = None

    def log_likelihood(self, n_obs):
        h = self.m
        quad = np.sum(self.quad_y - 2.0 * h * self.sum_Kinv_y + h * h * self.lam)
        return float(
            -0.5 * quad
            + 0.5 * self.gamma @ self.C @ self.gamma
            - 0.5 * self.B_logdet
            - 0.5 * np.sum(self.logdet_t)
            - 0.5 * n_obs * _LOG_2PI
        )

    def predict_seen(self, k, epochs, t_star):
        t_obs = np.asarray(epochs, dtype=float)
        t_star = np.atleast_1d(np.asarray(t_star, dtype=float))
        Ks = self.kt(t_star[:, None], t_obs[None, :])  # (T, n)
        omega = 1.0 - Ks @ self.Kinv_1[k]
        mean = Ks @ self.Kinv_y[k] + omega * self.mu_f[k]
        V = solve_triangular(self.L[k], Ks.T, lower=True, check_finite=False)
        var = self.kt(t_star, t_star) - np.sum(V * V, axis=0) + omega**2 * self.C[k, k]
        return mean, var

    def _unseen_terms(self, seen):
        if self._unseen_cache is None:
            lam = self.lam[seen]
            Kss = self.Kx[np.ix_(seen, seen)]
            # K_x^-1 C = (I + Lambda K_x)^-1 and (K_x + Lambda^-1)^-1 = (I + Lambda K_x)^-1 Lambda
            M = np.eye(seen.size) + lam[:, None] * Kss
            w = np.linalg.solve(M, self.gamma[seen])
            P = np.linalg.solve(M, np.diag(lam))
            self._unseen_cache = (w, 0.5 * (P + P.T))
        return self._unseen_cache

    def predict_unseen(self, k, seen, t_star):
        t_star = np.atleast_1d(np.asarray(t_star, dtype=float))
        kx_ss = self.Kx[k, k]
        if seen.size == 0:
            mean = np.full(t_star.shape, self.m)
            var = self.kt(t_star, t_star) + kx_ss
            return mean, var
        w, P = self._unseen_terms(seen)
        kx = self.Kx[seen, k]
        mean = np.full(t_star.shape, self.m + kx @ w)
        var = self.kt(t_star, t_star) + kx_ss - kx @ P @ kx
        return mean, var


@dataclass
class BeliefState:
    """Posterior over all curves given the observations made so far.

    Holds either a single :class:`GPHypers` or a bag of sampled ones; with a
    bag, every query returns mixture moments (mean of means, and
    ``mean(var + mean**2) - mean(mean)**2``).
    """

    n_arms: int
    hypers: GPHypers | list = field(default_factory=GPHypers)
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=float)
            if self.features.ndim == 1:
                self.features = self.features[:, None]
        bag = list(self.hypers) if isinstance(self.hypers, (list, tuple)) else [self.hypers]
        if not bag:
            raise ValueError("need at least one hyper-parameter setting")
        self.base_hypers = bag[0]
        self.epochs = [[] for _ in range(self.n_arms)]
        self.losses = [[] for _ in range(self.n_arms)]
        self._set_bag(bag)

    # -- construction / updates ---------------------------------------------

    def _set_bag(self, bag):
        self.bag = list(bag)
        self.hypers = self.bag[0] if len(self.bag) == 1 else list(self.bag)
        self.components = [_Component(h, self.n_arms, self.features) for h in self.bag]
        for c in self.components:
            for k in range(self.n_arms):
                c.refresh_arm(k, self.epochs[k], self.losses[k])
        self._finish()

    def set_hypers(self, hypers) -> "BeliefState":
        """Swap in new hyper-parameters (single value or bag) and rebuild caches."""
        bag = list(hypers) if isinstance(hypers, (list, tuple)) else [hypers]
        self._set_bag(bag)
        return self

    def _prior_mean(self, h):
        if h.mean is not None:
            return float(h.mean)
        return self.data_mean()

    def data_mean(self) -> float:
        n = self.n_obs
        if n == 0:
            return 0.0
        return float(sum(sum(l) for l in self.losses) / n)

    def _finish(self):
        for c in self.components:
            c.finish(self._prior_mean(c.hypers))

    @property
    def n_obs(self) -> int:
        return sum(len(e) for e in self.epochs)

    def n_seen(self, arm) -> int:
        return len(self.epochs[arm])

    def last_epoch(self, arm) -> int:
        return int(self.epochs[arm][-1]) if self.epochs[arm] else 0

    def seen_arms(self) -> np.ndarray:
        return np.array([k for k in range(self.n_arms) if self.epochs[k]], dtype=int)

    def update(self, arm: int, loss: float, epoch: int | None = None) -> "BeliefState":
        """Condition on one more observation of ``arm`` (in place; returns self)."""
        if not math.isfinite(loss):
            raise ValueError("loss must be finite")
        if epoch is None:
            epoch = self.last_epoch(arm) + 1
        if epoch in self.epochs[arm]:
            raise ValueError(f"arm {arm} already has an observation at epoch {epoch}")
        self.epochs[arm].append(int(epoch))
        self.losses[arm].append(float(loss))
        order = np.argsort(self.epochs[arm], kind="stable")
        self.epochs[arm] = [self.epochs[arm][i] for i in order]
        self.losses[arm] = [self.losses[arm][i] for i in order]
        for c in self.components:
            c.refresh_arm(arm, self.epochs[arm], self.losses[arm])
        self._finish()
        return self

    def copy(self) -> "BeliefState":
        return copy.deepcopy(self)

    def conditioned(self, arm: int, loss: float) -> "BeliefState":
        """New belief with one imagined observation; ``self`` is unchanged."""
        return self.copy().update(arm, loss)

    def rebuilt(self) -> "BeliefState":
        """A belief with identical data and hypers, with every cache recomputed."""
        fresh = BeliefState(self.n_arms, self.bag if len(self.bag) > 1 else self.bag[0], self.features)
        fresh.base_hypers = self.base_hypers
        for k in range(self.n_arms):
            fresh.epochs[k] = list(self.epochs[k])
            fresh.losses[k] = list(self.losses[k])
        fresh._set_bag(self.bag)
        return fresh

    # -- dense views (point hypers) -----------------------------------------

    def observations(self):
        """Flattened ``(arm, epoch, loss)`` arrays, arm-major then epoch order."""
        arms, ts, ys = [], [], []
        for k in range(self.n_arms):
            arms += [k] * len(self.epochs[k])
            ts += self.epochs[k]
            ys += self.losses[k]
        return np.array(arms, dtype=int), np.array(ts, dtype=float), np.array(ys, dtype=float)

    def joint_cov(self, component: int = 0) -> np.ndarray:
        """``K_t + O K_x O^T + noise^2 I`` over all observed losses."""
        if self.n_obs == 0:
            raise ValueError("no observations")
        c = self.components[component]
        arms, ts, _ = self.observations()
        same = arms[:, None] == arms[None, :]
        Kt = np.where(same, c.kt(ts[:, None], ts[None, :]), 0.0)
        return Kt + c.Kx[np.ix_(arms, arms)] + c.hypers.noise_std**2 * np.eye(ts.size)

    # -- queries ---------------------------------------------------------------

    def log_likelihood(self, component: int = 0) -> float:
        if self.n_obs == 0:
            raise ValueError("no observations")
        return self.components[component].log_likelihood(self.n_obs)

    def log_likelihood_of(self, hypers: GPHypers) -> float:
        c = _Component(hypers, self.n_arms, self.features)
        for k in range(self.n_arms):
            c.refresh_arm(k, self.epochs[k], self.losses[k])
        c.finish(self._prior_mean(hypers))
        return c.log_likelihood(self.n_obs)

    def _mix(self, parts):
        means = np.array([p[0] for p in parts])
        vars_ = _clamp_var(np.array([p[1] for p in parts]))
        if len(parts) == 1:
            return means[0], vars_[0]
        mean = means.mean(axis=0)
        var = (vars_ + means**2).mean(axis=0) - mean**2
        return mean, _clamp_var(var)

    def posterior_asymptote(self) -> list[GaussianScalar]:
        mean, var = self._mix([(c.mu_f, np.diag(c.C)) for c in self.components])
        return [GaussianScalar(float(m), float(math.sqrt(v))) for m, v in zip(mean, var)]

    def asymptote_cov(self, component: int = 0) -> np.ndarray:
        return self.components[component].C.copy()

    def predict_curve(self, arm: int, t_star, include_noise: bool = False):
        """Predictive means and variances of ``y^arm`` at epochs ``t_star``."""
        if self.epochs[arm]:
            parts = [c.predict_seen(arm, self.epochs[arm], t_star) for c in self.components]
        else:
            seen = self.seen_arms()
            parts = [c.predict_unseen(arm, seen, t_star) for c in self.components]
        mean, var = self._mix(parts)
        if include_noise:
            var = var + np.mean([c.hypers.noise_std**2 for c in self.components])
        return mean, var

    def predict(self, arm: int, t: float, include_noise: bool = False) -> GaussianScalar:
        mean, var = self.predict_curve(arm, [t], include_noise)
        return GaussianScalar(float(mean[0]), float(math.sqrt(var[0])))

    def predict_seen(self, arm: int, t: float) -> GaussianScalar:
        if not self.epochs[arm]:
            raise ValueError(f"arm {arm} has no observations")
        return self.predict(arm, t)

    def predict_unseen(self, arm: int, t: float) -> GaussianScalar:
        if self.epochs[arm]:
            raise ValueError(f"arm {arm} already has observations")
        return self.predict(arm, t)

    def next_prediction(self, arm: int, include_noise: bool = True) -> GaussianScalar:
        """Predictive distribution of the arm's next observed loss."""
        return self.predict(arm, self.last_epoch(arm) + 1, include_noise)

    def expected_future_curve(self, arm: int, horizon: int) -> np.ndarray:
        """Predictive means at epochs ``t0 + 1 .. t0 + horizon``."""
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        t0 = self.last_epoch(arm)
        mean, _ = self.predict_curve(arm, np.arange(t0 + 1, t0 + horizon + 1))
        return mean

    def future_best(self, arm: int, horizon: int) -> tuple[int, GaussianScalar]:
        """Offset ``tau`` of the lowest expected loss ahead and the Gaussian there.

        Ties go to the earliest offset.
        """
        t0 = self.last_epoch(arm)
        ts = np.arange(t0 + 1, t0 + horizon + 1)
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        mean, var = self.predict_curve(arm, ts)
        i = int(np.argmin(mean))
        return i + 1, GaussianScalar(float(mean[i]), float(math.sqrt(var[i])))


# -- slice sampling of hyper-parameters ------------------------------------


def slice_sample(logp, x0, rng, step=0.5, n_samples=10, burn_in=10, max_attempts=10):
    """Coordinate-wise univariate slice sampling (step out, then shrink).

    Stepping out stops after ``max_attempts`` widenings per side. If shrinking
    needs more than ``max_attempts`` proposals the coordinate keeps its old
    value and the failure is counted.

    Returns
    -------
    samples : ndarray of shape (n_samples, d)
    n_failed : int
    """
    x = np.array(x0, dtype=float, copy=True).ravel()
    lp = logp(x)
    if not np.isfinite(lp):
        raise ValueError("starting point has zero density")
    out = np.empty((n_samples, x.size))
    n_failed = 0
    for it in range(burn_in + n_samples):
        for d in range(x.size):
            log_u = lp + math.log(rng.random())
            lo = x[d] - step * rng.random()
            hi = lo + step
            xp = x.copy()
            for _ in range(max_attempts):
                xp[d] = lo
                if logp(xp) <= log_u:
                    break
                lo -= step
            for _ in range(max_attempts):
                xp[d] = hi
                if logp(xp) <= log_u:
                    break
                hi += step
            for _ in range(max_attempts):
                xp[d] = lo + rng.random() * (hi - lo)
                lpp = logp(xp)
                if lpp > log_u:
                    x, lp = xp, lpp
                    break
                if xp[d] < x[d]:
                    lo = xp[d]
                else:
                    hi = xp[d]
            else:
                n_failed += 1
        if it >= burn_in:
            out[it - burn_in] = x
    return out, n_failed


_SAMPLED = ("ft_alpha", "ft_beta", "time_magnitude", "x_magnitude", "noise_std")
_PRIOR_LOG_SD = 2.0


def _free_names(h: GPHypers):
    names = [n for n in _SAMPLED if n != "noise_std" or h.noise_std > 0]
    if not h.independent:
        names.append("x_lengthscale")
    return names


def slice_sample_hypers(
    belief: BeliefState,
    step: float = 0.5,
    burn_in: int = 10,
    max_attempts: int = 10,
    n_samples: int = 10,
    seed=0,
    start: GPHypers | None = None,
    return_failures: bool = False,
):
    """Draw hyper-parameters from their posterior given the belief's data.

    Positive parameters are sampled in log space under independent
    log-normal priors (log-sd 2) centred on ``belief.base_hypers``.
    Returns the bag, and with ``return_failures`` also the number of
    coordinate updates that gave up and kept their previous value.
    """
    if belief.n_obs == 0:
        raise ValueError("no observations to condition on")
    if step <= 0:
        raise ValueError("step must be > 0")
    start = start or (belief.bag[-1] if belief.bag else belief.base_hypers)
    center = belief.base_hypers
    names = _free_names(start)
    mu0 = np.array([math.log(getattr(center, n)) for n in names])
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def unpack(z):
        return replace(start, **{n: float(math.exp(v)) for n, v in zip(names, z)})

    def logp(z):
        if np.any(np.abs(z) > 30):
            return -np.inf
        prior = -0.5 * np.sum(((z - mu0) / _PRIOR_LOG_SD) ** 2)
        try:
            return belief.log_likelihood_of(unpack(z)) + prior
        except np.linalg.LinAlgError:
            return -np.inf

    z0 = np.array([math.log(getattr(start, n)) for n in names])
    samples, n_failed = slice_sample(logp, z0, rng, step, n_samples, burn_in, max_attempts)
    if n_failed:
        logger.info("slice sampler kept the previous value %d times", n_failed)
    bag = [unpack(z) for z in samples]
    return (bag, n_failed) if return_failures else bag


@dataclass(frozen=True)
class BeliefConfig:
    """How a tuning run builds and refreshes its belief.

    ``hypers=None`` uses the generator hyper-parameters stored in the curve
    metadata when present, else :class:`GPHypers` defaults. ``independent``
    overrides the configuration-kernel flag of whichever hypers are used;
    ``None`` keeps it as found.
    """

    hypers: GPHypers | None = None
    independent: bool | None = None
    sample_hypers: bool = False
    resample_every: int = 5
    n_samples: int = 10
    slice_step: float = 0.5
    burn_in: int = 10
    max_attempts: int = 10

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BeliefConfig":
        d = dict(d)
        if isinstance(d.get("hypers"), dict):
            d["hypers"] = GPHypers.from_dict(d["hypers"])
        return cls(**d)


def make_belief(curves, config: BeliefConfig | None = None) -> BeliefState:
    config = config or BeliefConfig()
    hypers = config.hypers
    if hypers is None:
        stored = curves.meta.get("hypers")
        hypers = GPHypers.from_dict(stored) if stored else GPHypers()
    if config.independent is not None:
        hypers = replace(hypers, independent=config.independent)
    return BeliefState(curves.n_arms, hypers, curves.features)


def refresh_hypers(belief: BeliefState, config: BeliefConfig, n_done: int, rng) -> None:
    """Re-draw the hyper-parameter bag every ``resample_every`` observations."""
    if not config.sample_hypers or belief.n_obs == 0:
        return
    if n_done % config.resample_every:
        return
    bag = slice_sample_hypers(
        belief,
        step=config.slice_step,
        burn_in=config.burn_in,
        max_attempts=config.max_attempts,
        n_samples=config.n_samples,
        seed=rng,
    )
    belief.set_hypers(bag)
