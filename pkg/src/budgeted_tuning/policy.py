"""Value-of-information action values and the budgeted tuning loop.

At every step each eligible arm ``k`` gets a Gaussian ``nu_k`` for its best
loss over the remaining horizon (the predictive at the epoch offset with the
lowest expected loss). With ``c`` the arm of lowest expected value,

* ``Q[a] = E[min(nu_a, mu_1st)]`` for ``a != c``
* ``Q[c] = E[min(nu_c, mu_2nd)]``

and the arm with the smallest ``Q`` is played, unless the predicted top arm
needs the whole remaining budget to reach its minimum, in which case it is
played outright.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc, erfcx

from .curve_env import CurveSet, ReplayEnv, TuningResult
from .gp import BeliefConfig, BeliefState, GaussianScalar, make_belief, refresh_hypers

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(s):
    return 0.5 * erfc(-np.asarray(s, dtype=float) / _SQRT2)


def norm_pdf(s):
    s = np.asarray(s, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * s * s)


def _surprise(s):
    """``s * Phi(s) + phi(s)``, i.e. ``E[(s - Z)^+]`` for standard normal Z."""
    return s * norm_cdf(s) + norm_pdf(s)


def _log_surprise(s: float) -> float:
    """``log(s * Phi(s) + phi(s))`` accurate far into the lower tail."""
    if s > -1.0:
        return math.log(float(_surprise(s)))
    x = -s
    if x < 30.0:
        # phi(x) - x * Phi(-x) with the Gaussian factor pulled out via erfcx
        bracket = _INV_SQRT_2PI - 0.5 * x * float(erfcx(x / _SQRT2))
        return -0.5 * x * x + math.log(bracket)
    ix2 = 1.0 / (x * x)
    series = 1.0 - 3.0 * ix2 + 15.0 * ix2**2 - 105.0 * ix2**3
    return -0.5 * x * x + math.log(_INV_SQRT_2PI) + math.log(ix2) + math.log(series)


def action_value(nu: GaussianScalar, mu: float) -> float:
    """``E[min(nu, mu)]`` for Gaussian ``nu`` and constant ``mu``."""
    m, sd = float(nu.mean), float(nu.std)
    low = min(m, mu)
    if sd == 0.0:
        return low
    s = (mu - m) / sd
    if not abs(s) < 38.0:
        # the surprise term is below 1e-300 of the gap; E[min] is the smaller value
        return low
    # E[min(nu, mu)] = low - sd * g(-|s|): the correction is a small positive
    # term, so no cancellation against mu and no rounding wobble in sd
    return low - sd * math.exp(_log_surprise(-abs(s)))


def log_voi(nu: GaussianScalar, mu: float, top: bool = False) -> float:
    """Log of the surprise term that separates ``Q`` from ``mu_1st``.

    For a non-top arm this is ``log E[(mu - nu)^+]``; for the predicted top
    arm (``top=True``, ``mu`` = runner-up value) it is ``log E[(nu - mu)^+]``.
    Ranking arms by it reproduces the ranking by ``Q`` without the
    cancellation that flattens ``Q`` once the surprise drops below one ulp.
    """
    m, sd = float(nu.mean), float(nu.std)
    gap = (m - mu) if top else (mu - m)
    if sd == 0.0:
        return math.log(gap) if gap > 0 else -math.inf
    if not math.isfinite(gap):
        return math.inf if gap > 0 else -math.inf
    return math.log(sd) + _log_surprise(gap / sd)


@dataclass
class DecisionContext:
    """Per-step summary the selection rules work from."""

    remaining: int
    tau: np.ndarray
    nu: list
    eligible: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=int)
        self.eligible = np.asarray(self.eligible, dtype=bool)
        if not self.eligible.any():
            raise ValueError("no eligible arm")
        mu = np.where(self.eligible, [g.mean for g in self.nu], np.inf)
        self.mu = mu
        self.top = int(np.argmin(mu))
        self.mu_1st = float(mu[self.top])
        rest = np.delete(mu, self.top)
        self.mu_2nd = float(rest.min()) if rest.size else math.inf
        self.tau_star = int(self.tau[self.top])

    @property
    def n_eligible(self) -> int:
        return int(self.eligible.sum())

    @classmethod
    def from_belief(cls, belief: BeliefState, remaining: int, eligible, room=None):
        """Build the context from a belief.

        ``room[k]`` caps arm ``k``'s look-ahead at the epochs it has left.
        """
        eligible = np.asarray(eligible, dtype=bool)
        K = eligible.size
        tau = np.zeros(K, dtype=int)
        nu = [GaussianScalar(math.inf, 0.0)] * K
        for k in np.flatnonzero(eligible):
            h = remaining if room is None else min(remaining, int(room[k]))
            tau[k], nu[k] = belief.future_best(int(k), h)
        return cls(remaining, tau, nu, eligible)


def q_all(ctx: DecisionContext) -> np.ndarray:
    q = np.full(ctx.eligible.size, np.inf)
    for a in np.flatnonzero(ctx.eligible):
        mu = ctx.mu_2nd if a == ctx.top else ctx.mu_1st
        q[a] = action_value(ctx.nu[a], mu)
    return q


def voi_all(ctx: DecisionContext) -> np.ndarray:
    """Per-arm log surprise; ``argmax`` of this is ``argmin`` of :func:`q_all`."""
    v = np.full(ctx.eligible.size, -np.inf)
    for a in np.flatnonzero(ctx.eligible):
        if a == ctx.top:
            v[a] = log_voi(ctx.nu[a], ctx.mu_2nd, top=True)
        else:
            v[a] = log_voi(ctx.nu[a], ctx.mu_1st)
    return v


def _argmax_eligible(values, eligible) -> int:
    v = np.where(eligible, values, -np.inf)
    best = np.flatnonzero(v == v.max())
    return int(best[0])


def select_bhpt(ctx: DecisionContext, rng=None) -> int:
    if ctx.n_eligible == 1 or ctx.tau_star >= ctx.remaining:
        return ctx.top
    return _argmax_eligible(voi_all(ctx), ctx.eligible)


def select_eps(ctx: DecisionContext, eps: float, rng) -> int:
    """Epsilon-greedy variant: explore the best non-top arm with probability ``eps``."""
    if ctx.n_eligible == 1 or ctx.tau_star >= ctx.remaining:
        return ctx.top
    if rng.random() < eps:
        others = ctx.eligible.copy()
        others[ctx.top] = False
        v = voi_all(ctx)
        return _argmax_eligible(v, others)
    return ctx.top


POLICY_KINDS = ("bhpt", "bhpt-eps", "random", "hyperband", "gp-ei", "rollout")


@dataclass(frozen=True)
class PolicySpec:
    """A tuning policy and its settings.

    ``params`` carries baseline-specific knobs: ``eta`` for hyperband, ``h``
    and ``n_quad`` for rollout.
    """

    kind: str = "bhpt"
    eps: float = 0.5
    belief: BeliefConfig = field(default_factory=BeliefConfig)
    params: dict = field(default_factory=dict)
    name: str | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        object.__setattr__(self, "kind", kind)
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        d = asdict(self)
        d["belief"] = self.belief.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicySpec":
        d = dict(d)
        if "belief" in d:
            d["belief"] = BeliefConfig.from_dict(d["belief"])
        return cls(**d)


def run_rng(seed, *salt) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in salt]]))


def _run_bhpt(curves: CurveSet, spec: PolicySpec, budget: int, seed) -> TuningResult:
    env = ReplayEnv(curves, budget)
    belief = make_belief(curves, spec.belief)
    rng = run_rng(seed, 1)
    hyper_rng = run_rng(seed, 2)
    lengths = curves.lengths
    while not env.done:
        eligible = env.eligible()
        if not eligible.any():
            raise RuntimeError("every curve is exhausted before the budget")
        ctx = DecisionContext.from_belief(belief, env.remaining, eligible, lengths - env.cursor)
        if spec.kind == "bhpt":
            arm = select_bhpt(ctx, rng)
        else:
            arm = select_eps(ctx, spec.eps, rng)
        loss = env.step(arm)
        belief.update(arm, loss)
        refresh_hypers(belief, spec.belief, env.n, hyper_rng)
    return env.result(spec.label, seed)


def run_tuning(curves: CurveSet, spec: PolicySpec, budget: int, seed=0) -> TuningResult:
    """Run one policy for ``budget`` steps on ``curves``."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if budget > int(curves.lengths.sum()):
        raise ValueError("budget exceeds the total number of recorded epochs")
    from . import baselines

    kind = spec.kind
    if kind in ("bhpt", "bhpt-eps"):
        res = _run_bhpt(curves, spec, budget, seed)
    elif kind == "random":
        res = baselines.run_random(curves, budget, seed)
    elif kind == "hyperband":
        res = baselines.run_hyperband(curves, budget, spec.params.get("eta", 3), seed)
    elif kind == "gp-ei":
        res = baselines.run_gp_ei(curves, budget, spec.belief, seed)
    else:
        cfg = baselines.RolloutConfig(
            h=spec.params.get("h", 3), n_quad=spec.params.get("n_quad", 5)
        )
        res = baselines.run_rollout(curves, budget, cfg, spec.belief, seed)
    return TuningResult(res.trajectory, res.output_loss, res.output_arm, res.allocation, spec.label, seed)


class StationaryArms:
    """Gaussian arms with fixed means and a conjugate belief on each mean.

    A test bed for the selection rule on its own: every arm's future-best
    Gaussian is just the posterior over its mean, whose variance shrinks as
    ``noise**2 / n`` regardless of the values seen.
    """

    def __init__(self, means, noise_std, prior_mean=0.0, prior_std=10.0, seed=0):
        self.means = np.asarray(means, dtype=float)
        self.noise_std = float(noise_std)
        self.rng = np.random.default_rng(seed)
        K = self.means.size
        self.prec = np.full(K, 1.0 / prior_std**2)
        self.weighted = np.full(K, prior_mean / prior_std**2)
        self.pulls = np.zeros(K, dtype=int)

    def context(self, remaining=10**9) -> DecisionContext:
        mean = self.weighted / self.prec
        sd = 1.0 / np.sqrt(self.prec)
        nu = [GaussianScalar(float(m), float(s)) for m, s in zip(mean, sd)]
        K = self.means.size
        return DecisionContext(remaining, np.ones(K, dtype=int), nu, np.ones(K, dtype=bool))

    def pull(self, arm) -> float:
        y = self.means[arm] + self.noise_std * self.rng.standard_normal()
        self.prec[arm] += 1.0 / self.noise_std**2
        self.weighted[arm] += y / self.noise_std**2
        self.pulls[arm] += 1
        return y

    def run(self, steps, rule=select_bhpt) -> np.ndarray:
        """Play ``steps`` rounds and return the step index of each arm's first pull."""
        first = np.full(self.means.size, -1)
        for n in range(steps):
            arm = rule(self.context())
            if first[arm] < 0:
                first[arm] = n
            self.pull(arm)
        return first
