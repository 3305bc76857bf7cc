"""One synthetic set, one budget, every policy.

Prints each policy's output loss, normalized regret and how it spread the
budget over the arms. The value-of-information policy tends to pile its
budget on a few promising arms; random spreads it evenly; Hyperband spends
it in halving rounds.
"""
from budgeted_tuning import PolicySpec, SynthSpec, normalized_regret, optimal_loss, run_tuning, sample_curveset

cs = sample_curveset(SynthSpec(n_arms=8, epochs=24, seed=11))
budget = 40
best_arm, best = optimal_loss(cs, budget)
print(f"{cs.n_arms} arms, budget {budget}; best reachable loss {best:.4f} on arm {best_arm}\n")

policies = [
    PolicySpec("bhpt"),
    PolicySpec("bhpt-eps", eps=0.5),
    PolicySpec("random"),
    PolicySpec("hyperband", params={"eta": 3}),
    PolicySpec("gp-ei"),
    PolicySpec("rollout", params={"h": 2, "n_quad": 3}),
]
for spec in policies:
    res = run_tuning(cs, spec, budget, seed=0)
    regret = normalized_regret(res.output_loss, best, cs.initial_loss)
    alloc = " ".join(f"{b:>2}" for b in res.allocation)
    print(f"{spec.label:<10} loss {res.output_loss:.4f}  regret {regret:.4f}  arm {res.output_arm}  [{alloc}]")
