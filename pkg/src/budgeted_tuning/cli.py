"""Command line front end: ``run``, ``gen`` and ``report``.

``run --spec exp.json`` sweeps an experiment and writes ``records.csv`` (and a
regret plot) to the output directory; ``gen --synth synth.json --out DIR``
writes generated curve files; ``report`` turns a records CSV into a plot.
The default output directory comes from ``$BUDGETED_TUNING_OUTPUT``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import (
    METRICS,
    ExperimentSpec,
    budget_fraction_on_output,
    default_output_dir,
    emit_csv,
    emit_plot,
    hit_rate_at_k,
    read_csv,
    run_experiment,
    summarize,
)
from .curve_env import save_curves
from .synthgen import SynthSpec, sample_curveset


def _cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    out = Path(args.out or spec.output_dir or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    records = run_experiment(spec, workers=args.workers)
    csv_path = emit_csv(records, out / "records.csv", wall_clock=args.wall_clock)
    spec.save(out / "experiment.json")
    if any(r.ok for r in records):
        emit_plot(records, "regret", out / "regret.svg")
    failed = sum(not r.ok for r in records)
    print(f"{len(records)} runs ({failed} failed) -> {csv_path}")
    for pol, rows in summarize(records, "regret").items():
        cells = "  ".join(f"B={b}: {m:.4f}+-{s:.4f}" for b, m, s, _ in rows)
        print(f"  {pol:<12} {cells}")
    return 1 if failed == len(records) else 0


def _synth_specs(path) -> list[SynthSpec]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(d, dict) and "seeds" in d:
        base = {k: v for k, v in d.items() if k != "seeds"}
        return [SynthSpec.from_dict({**base, "seed": s}) for s in d["seeds"]]
    if isinstance(d, dict):
        return [SynthSpec.from_dict(d)]
    return [SynthSpec.from_dict(x) for x in d]


def _cmd_gen(args) -> int:
    out = Path(args.out or default_output_dir())
    for spec in _synth_specs(args.synth):
        path = save_curves(sample_curveset(spec), out / f"synth-k{spec.n_arms}-s{spec.seed}.csv")
        print(path)
    return 0


def _cmd_report(args) -> int:
    records = read_csv(args.records)
    out = Path(args.out) if args.out else default_output_dir() / f"{args.metric}.svg"
    emit_plot(records, args.metric, out, k=args.k)
    print(f"hit rate@{args.k}: {hit_rate_at_k(records, k=args.k):.4f}")
    print(f"budget share on output arm: {budget_fraction_on_output(records):.4f}")
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="budgeted-tuning", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment sweep")
    r.add_argument("--spec", required=True, help="experiment JSON file")
    r.add_argument("--out", help="output directory")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--wall-clock", action="store_true", help="include wall-clock seconds in the CSV")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen", help="write synthetic curve files")
    g.add_argument("--synth", required=True, help="generator JSON: one spec, a list, or a spec with 'seeds'")
    g.add_argument("--out", help="output directory")
    g.set_defaults(func=_cmd_gen)

    rep = sub.add_parser("report", help="plot a metric from a records CSV")
    rep.add_argument("--records", required=True)
    rep.add_argument("--metric", choices=METRICS, default="regret")
    rep.add_argument("--out", help="SVG path")
    rep.add_argument("--k", type=int, default=5, help="top-k for the hit rate")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
