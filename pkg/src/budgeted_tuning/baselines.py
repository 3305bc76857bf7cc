"""Comparison policies: random, successive halving / Hyperband, GP-EI and rollout.

Every ``run_*`` spends exactly ``budget`` units on the replay environment and
returns a :class:`TuningResult`; all randomness comes from a generator seeded
by the run seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .curve_env import CurveSet, ReplayEnv, TuningResult
from .gp import BeliefConfig, BeliefState, GaussianScalar, make_belief, refresh_hypers
from .policy import _log_surprise, _surprise, run_rng

_SQRT_2PI = math.sqrt(2.0 * math.pi)


# -- random -------------------------------------------------------------------


def run_random(curves: CurveSet, budget: int, seed=0) -> TuningResult:
    """Pick an eligible arm uniformly at random at every step."""
    env = ReplayEnv(curves, budget)
    rng = run_rng(seed, 11)
    while not env.done:
        arms = np.flatnonzero(env.eligible())
        env.step(arms[rng.integers(arms.size)])
    return env.result("random", seed)


# -- successive halving / Hyperband ------------------------------------------


@dataclass(frozen=True)
class HyperbandSchedule:
    """Brackets of ``(n_i, r_i)`` rounds.

    ``r_i`` is the cumulative number of units each surviving arm has been
    trained for by the end of round ``i``; an arm promoted from round ``i``
    only costs ``r_{i+1} - r_i`` more units. ``truncated`` flags schedules
    that had to drop arms to fit the budget.
    """

    eta: int
    brackets: tuple
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "brackets", tuple(tuple((int(n), int(r)) for n, r in b) for b in self.brackets)
        )

    @staticmethod
    def bracket_cost(rounds) -> int:
        cost, prev = 0, 0
        for n, r in rounds:
            cost += n * (r - prev)
            prev = r
        return cost

    @property
    def total_units(self) -> int:
        return sum(self.bracket_cost(b) for b in self.brackets)


def _int_log(x: int, eta: int) -> int:
    """``floor(log_eta(x))`` without floating point."""
    s = 0
    while eta ** (s + 1) <= x:
        s += 1
    return s


def _halving_rounds(n: int, r0: int, eta: int, s: int) -> list:
    rounds = []
    for i in range(s + 1):
        rounds.append((n, r0 * eta**i))
        n //= eta
        if n == 0:
            break
    return rounds


def sh_schedule(n_arms: int, total_budget: int, eta: int = 3, max_units: int | None = None):
    """One successive-halving bracket that fits in ``total_budget``.

    Uses ``floor(log_eta(n_arms)) + 1`` rounds and the largest starting
    allocation ``r_0`` whose total cost fits (with the final round capped at
    ``max_units`` per arm). If even ``r_0 = 1`` does not fit, the initial arm
    count is reduced and the schedule is flagged as truncated.
    """
    if n_arms < 1:
        raise ValueError("n_arms must be >= 1")
    if eta < 2:
        raise ValueError("eta must be >= 2")
    if total_budget < 1:
        raise ValueError("total_budget must be >= 1")
    if n_arms == 1:
        r = total_budget if max_units is None else min(total_budget, max_units)
        return HyperbandSchedule(eta, [[(1, r)]])

    n, truncated = n_arms, False
    while True:
        s = _int_log(n, eta)
        unit = HyperbandSchedule.bracket_cost(_halving_rounds(n, 1, eta, s))
        if unit <= total_budget or n == 1:
            break
        n -= 1
        truncated = True
    r0 = max(1, total_budget // unit)
    if max_units is not None:
        r0 = max(1, min(r0, max_units // eta**s))
    if n == 1:
        r0 = min(total_budget, max_units or total_budget)
    return HyperbandSchedule(eta, [_halving_rounds(n, r0, eta, s)], truncated)


def hyperband_schedule(R: int, eta: int = 3, n_arms: int | None = None) -> HyperbandSchedule:
    """All Hyperband brackets for a maximum of ``R`` units per arm.

    Bracket ``s`` (from ``s_max = floor(log_eta R)`` down to 0) starts
    ``ceil((s_max + 1) / (s + 1) * eta**s)`` arms at ``R * eta**-s`` units.
    ``n_arms`` caps the arm count of each bracket at the size of the pool;
    a capped bracket keeps at least one arm in every round.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if eta < 2:
        raise ValueError("eta must be >= 2")
    s_max = _int_log(R, eta)
    brackets = []
    for s in range(s_max, -1, -1):
        n = -(-(s_max + 1) * eta**s // (s + 1))  # integer ceil
        if n_arms is not None:
            n = min(n, n_arms)
        rounds = []
        for i in range(s + 1):
            r = max(1, (R * eta**i) // eta**s)
            rounds.append((max(1, n), r))
            n //= eta
        brackets.append(rounds)
    return HyperbandSchedule(eta, brackets, truncated=n_arms is not None)


def _train_to(env: ReplayEnv, arm: int, units: int) -> bool:
    """Advance ``arm`` until it has ``units`` epochs; False once the budget is gone."""
    target = min(units, env.curves.lengths[arm])
    while env.cursor[arm] < target:
        if env.done:
            return False
        env.step(arm)
    return not env.done


def run_hyperband(curves: CurveSet, budget: int, eta: int = 3, seed=0) -> TuningResult:
    """Hyperband over the replay environment, passes repeated until the budget is spent.

    Each bracket draws its arms uniformly without replacement from the pool.
    Training resumes from wherever an arm already is, so an arm costs only
    the units it has not yet been trained for. Survivors of a round are the
    ``n_{i+1}`` arms with the lowest best observed loss (ties to lower index).
    """
    env = ReplayEnv(curves, budget)
    rng = run_rng(seed, 12)
    sched = hyperband_schedule(curves.max_epochs, eta, curves.n_arms)
    while not env.done:
        before = env.n
        for rounds in sched.brackets:
            pool = rng.permutation(curves.n_arms)[: rounds[0][0]]
            for i, (n_i, r_i) in enumerate(rounds):
                if i > 0:
                    order = np.lexsort((pool, env.best[pool]))
                    pool = pool[order][:n_i]
                for arm in pool:
                    if not _train_to(env, int(arm), r_i):
                        return env.result("hyperband", seed)
        if env.n == before:
            # every sampled arm is already trained as far as the schedule asks
            _spend_rest_on_best(env)
    return env.result("hyperband", seed)


def _spend_rest_on_best(env: ReplayEnv) -> None:
    while not env.done:
        elig = np.flatnonzero(env.eligible())
        arm = elig[np.argmin(env.best[elig])]
        env.step(int(arm))


# -- expected improvement and GP-EI ---------------------------------------------


def expected_improvement(pred: GaussianScalar, incumbent: float) -> float:
    """``E[(incumbent - X)^+]`` for ``X ~ N(pred.mean, pred.std**2)``."""
    m, sd = float(pred.mean), float(pred.std)
    if sd == 0.0:
        return max(incumbent - m, 0.0)
    u = (incumbent - m) / sd
    if u >= 38.0:  # Phi(u) == 1 and phi(u) == 0 in double precision
        return incumbent - m
    if u <= -40.0:  # sd * phi(u) / u**2 is below the smallest subnormal
        return 0.0
    if u <= -38.0:
        return sd * math.exp(_log_surprise(u))
    return max(sd * float(_surprise(u)), 0.0)


def _argmax_first(values) -> int:
    values = np.asarray(values, dtype=float)
    return int(np.flatnonzero(values == values.max())[0])


def run_gp_ei(curves: CurveSet, budget: int, belief_config: BeliefConfig | None = None, seed=0):
    """Bayesian optimisation without early stopping.

    Picks the untried arm whose posterior asymptote has the largest expected
    improvement over the best loss seen so far (the initial loss before any
    observation), then trains it to the end of its curve before choosing again.
    """
    belief_config = belief_config or BeliefConfig()
    env = ReplayEnv(curves, budget)
    belief = make_belief(curves, belief_config)
    hyper_rng = run_rng(seed, 13)
    tried = np.zeros(curves.n_arms, dtype=bool)
    while not env.done:
        candidates = np.flatnonzero(~tried & env.eligible())
        if candidates.size == 0:
            _spend_rest_on_best(env)
            break
        incumbent = min(curves.initial_loss, env.best_so_far())
        post = belief.posterior_asymptote()
        ei = [expected_improvement(post[a], incumbent) for a in candidates]
        arm = int(candidates[_argmax_first(ei)])
        tried[arm] = True
        while not env.done and env.cursor[arm] < curves.lengths[arm]:
            belief.update(arm, env.step(arm))
            refresh_hypers(belief, belief_config, env.n, hyper_rng)
    return env.result("gp-ei", seed)


# -- rollout ------------------------------------------------------------------


def gauss_hermite(n_quad: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``E[g(X)] ~ sum(w * g(x))`` for ``X ~ N(0, 1)``."""
    if not 1 <= n_quad <= 20:
        raise ValueError("n_quad must lie in [1, 20]")
    x, w = hermegauss(n_quad)
    return x, w / _SQRT_2PI


@dataclass(frozen=True)
class RolloutConfig:
    h: int = 3
    n_quad: int = 5
    max_calls: int = 10**7

    def __post_init__(self):
        if self.h < 1 or self.n_quad < 1:
            raise ValueError("h and n_quad must be >= 1")


class RecursionBudgetExceeded(RuntimeError):
    pass


@dataclass
class _Imagined:
    """A belief plus imagined observations, each arm updated on its own.

    Arms with no imagined observation answer from the real belief. Once an
    arm has imagined data it is re-conditioned on its own real and imagined
    losses only, under the per-arm marginal prior of each hyper setting.
    """

    belief: BeliefState
    extra: dict = field(default_factory=dict)
    room: np.ndarray | None = None

    def with_obs(self, arm: int, z: float) -> "_Imagined":
        extra = dict(self.extra)
        extra[arm] = extra.get(arm, ()) + (float(z),)
        room = None
        if self.room is not None:
            room = self.room.copy()
            room[arm] -= 1
        return _Imagined(self.belief, extra, room)

    def can_play(self) -> np.ndarray:
        if self.room is None:
            return np.ones(self.belief.n_arms, dtype=bool)
        return self.room > 0

    def next_obs(self, arm: int) -> GaussianScalar:
        b = self.belief
        if arm not in self.extra:
            return b.next_prediction(arm)
        imag = self.extra[arm]
        t = np.asarray(b.epochs[arm] + list(range(b.last_epoch(arm) + 1, b.last_epoch(arm) + 1 + len(imag))), float)
        y = np.asarray(b.losses[arm] + list(imag))
        t_star = t[-1] + 1.0
        parts = []
        for c in b.components:
            v = c.Kx[arm, arm]
            s2 = c.hypers.noise_std**2
            S = c.kt(t[:, None], t[None, :]) + v + s2 * np.eye(t.size)
            ks = c.kt(np.array([t_star]), t) + v
            sol = np.linalg.solve(S, np.column_stack([y - c.m, ks]))
            mean = c.m + ks @ sol[:, 0]
            var = float(c.kt(t_star, t_star)) + v - ks @ sol[:, 1]
            parts.append((mean, max(var, 0.0) + s2))
        mean, var = b._mix(parts)
        return GaussianScalar(float(mean), float(math.sqrt(var)))


def rollout_value(belief, arm: int, zeta: float, depth: int, config: RolloutConfig = RolloutConfig(), room=None) -> float:
    """Rollout estimate of the improvement collected by playing ``arm`` now.

    ``depth = 1`` is the expected improvement of the arm's next observation
    over the incumbent ``zeta``. Deeper levels add, at each Gauss-Hermite node
    ``z_q`` of that observation, the value of continuing with the EI-greedy
    arm from the imagined state with incumbent ``min(zeta, z_q)``.

    ``belief`` may also be a rollout state: any object with ``next_obs``,
    ``with_obs`` and ``can_play`` (as :class:`_Imagined` has).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > config.h:
        raise ValueError("depth exceeds the rolling horizon")
    state = belief if hasattr(belief, "with_obs") else _Imagined(belief, room=room)
    nodes, weights = gauss_hermite(config.n_quad)
    calls = [0]
    return _rollout(state, arm, zeta, depth, nodes, weights, config.max_calls, calls)


def _rollout(state, arm, zeta, depth, nodes, weights, max_calls, calls):
    calls[0] += 1
    if calls[0] > max_calls:
        raise RecursionBudgetExceeded("rollout recursion exceeded its call cap")
    pred = state.next_obs(arm)
    value = expected_improvement(pred, zeta)
    if depth == 1:
        return value
    future = 0.0
    for x, w in zip(nodes, weights):
        z = pred.mean + pred.std * x
        nxt = state.with_obs(arm, z)
        z_inc = min(zeta, z)
        ok = np.flatnonzero(nxt.can_play())
        if ok.size == 0:
            continue
        ei = [expected_improvement(nxt.next_obs(int(a)), z_inc) for a in ok]
        a_next = int(ok[_argmax_first(ei)])
        future += w * _rollout(nxt, a_next, z_inc, depth - 1, nodes, weights, max_calls, calls)
    return value + future


def run_rollout(
    curves: CurveSet,
    budget: int,
    config: RolloutConfig = RolloutConfig(),
    belief_config: BeliefConfig | None = None,
    seed=0,
) -> TuningResult:
    """One-step look-ahead with an EI-greedy rollout over ``min(h, B - n)`` steps."""
    belief_config = belief_config or BeliefConfig()
    env = ReplayEnv(curves, budget)
    belief = make_belief(curves, belief_config)
    hyper_rng = run_rng(seed, 14)
    while not env.done:
        zeta = min(curves.initial_loss, env.best_so_far())
        depth = min(config.h, env.remaining)
        room = curves.lengths - env.cursor
        elig = np.flatnonzero(env.eligible())
        vals = [rollout_value(belief, int(a), zeta, depth, config, room) for a in elig]
        arm = int(elig[_argmax_first(vals)])
        belief.update(arm, env.step(arm))
        refresh_hypers(belief, belief_config, env.n, hyper_rng)
    return env.result("rollout", seed)


# -- accumulated improvement -------------------------------------------------


def accumulated_improvement(losses, zeta1: float) -> float:
    """``sum_n (zeta_n - z_n)^+`` with ``zeta_n`` the best value before step ``n``.

    Telescopes to ``zeta1 - min(zeta1, min(losses))``.
    """
    total, zeta = 0.0, float(zeta1)
    for z in losses:
        z = float(z)
        if z < zeta:
            total += zeta - z
            zeta = z
    return total
