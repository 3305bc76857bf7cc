"""A small budget sweep through the experiment API.

Writes ``records.csv`` and ``regret.svg`` to ``$BUDGETED_TUNING_OUTPUT``
(default ``results/``), the same files ``budgeted-tuning run`` produces.
"""
from budgeted_tuning.bench import (
    ExperimentSpec,
    budget_fraction_on_output,
    default_output_dir,
    emit_csv,
    emit_plot,
    hit_rate_at_k,
    run_experiment,
    summarize,
)
from budgeted_tuning.synthgen import SynthSpec

spec = ExperimentSpec(
    budgets=[8, 16, 32],
    policies=[{"kind": "bhpt"}, {"kind": "random"}, {"kind": "hyperband"}],
    seeds=[0],
    synth=[SynthSpec(n_arms=8, epochs=16, seed=s) for s in range(4)],
)
records = run_experiment(spec, workers=2)
out = default_output_dir()
emit_csv(records, out / "records.csv")
emit_plot(records, "regret", out / "regret.svg")

for pol, rows in summarize(records, "regret").items():
    print(pol, "  ".join(f"B={b}: {m:.3f}+-{s:.3f}" for b, m, s, _ in rows))
for pol in ("bhpt", "random", "hyperband"):
    mine = [r for r in records if r.policy == pol]
    print(f"{pol:<10} hit rate@3 {hit_rate_at_k(mine, k=3):.2f}   "
          f"budget share on output arm {budget_fraction_on_output(mine):.2f}")
print("wrote", out / "records.csv", "and", out / "regret.svg")
