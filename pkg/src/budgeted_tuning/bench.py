"""Sweeps of policies x budgets x seeds over curve sets, plus tables and plots.

A run is identified by ``(set_id, policy, budget, seed)``. Records are merged
in that order whatever the execution order, so a sweep's CSV is identical
across reruns (wall-clock is left out of the CSV unless asked for).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .curve_env import (
    CurveSet,
    DegenerateRange,
    ground_truth_ranks,
    load_curves,
    normalized_regret,
    optimal_loss,
)
from .policy import PolicySpec, run_tuning
from .synthgen import SynthSpec, sample_curveset

logger = logging.getLogger(__name__)

OUTPUT_ENV = "BUDGETED_TUNING_OUTPUT"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep definition.

    Curve sets come from ``curve_files`` (paths in the curve file format)
    and/or ``synth`` (generator settings). Every set is run under every
    policy, budget and seed.
    """

    budgets: tuple
    policies: tuple
    seeds: tuple
    curve_files: tuple = ()
    synth: tuple = ()
    output_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        pols = tuple(p if isinstance(p, PolicySpec) else PolicySpec.from_dict(p) for p in self.policies)
        object.__setattr__(self, "policies", pols)
        syn = tuple(s if isinstance(s, SynthSpec) else SynthSpec.from_dict(s) for s in self.synth)
        object.__setattr__(self, "synth", syn)
        object.__setattr__(self, "curve_files", tuple(str(p) for p in self.curve_files))
        if not self.budgets or not self.policies or not self.seeds:
            raise ValueError("budgets, policies and seeds must all be non-empty")
        if not self.curve_files and not self.synth:
            raise ValueError("no curve sets: give curve_files and/or synth")
        if min(self.budgets) < 1:
            raise ValueError("budgets must be >= 1")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"policy labels must be unique, got {labels}")

    def to_dict(self) -> dict:
        return {
            "budgets": list(self.budgets),
            "policies": [p.to_dict() for p in self.policies],
            "seeds": list(self.seeds),
            "curve_files": list(self.curve_files),
            "synth": [s.to_dict() for s in self.synth],
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown experiment fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        """Read a JSON experiment file; relative curve paths are taken from its folder."""
        path = Path(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        d["curve_files"] = [str((path.parent / p) if not Path(p).is_absolute() else p) for p in d.get("curve_files", [])]
        return cls.from_dict(d)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def curve_sets(self) -> list[tuple[str, CurveSet]]:
        """``(set_id, CurveSet)`` pairs, files first, then generated sets."""
        out = []
        for p in self.curve_files:
            out.append((Path(p).stem, load_curves(p)))
        for i, s in enumerate(self.synth):
            out.append((f"synth{i:03d}-s{s.seed}", sample_curveset(s)))
        ids = [sid for sid, _ in out]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate set ids {ids}")
        return out


@dataclass(frozen=True)
class RunRecord:
    set_id: str
    policy: str
    budget: int
    seed: int
    status: str = "ok"
    output_loss: float = math.nan
    output_arm: int = -1
    output_rank: int = -1
    optimum: float = math.nan
    initial_loss: float = math.nan
    regret: float = math.nan
    allocation: tuple = ()
    wall_clock: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def key(self) -> tuple:
        return (self.set_id, self.policy, self.budget, self.seed)


def run_cell(set_id: str, curves: CurveSet, policy: PolicySpec, budget: int, seed: int) -> RunRecord:
    """One run; errors become a record with ``status`` set to the message."""
    base = dict(set_id=set_id, policy=policy.label, budget=int(budget), seed=int(seed))
    t0 = time.perf_counter()
    try:
        res = run_tuning(curves, policy, budget, seed)
    except Exception as exc:  # recorded, the sweep goes on
        logger.warning("run %s failed: %s", base, exc)
        return RunRecord(**base, status=f"error: {type(exc).__name__}: {exc}")
    wall = time.perf_counter() - t0
    _, opt = optimal_loss(curves, budget)
    try:
        regret = normalized_regret(res.output_loss, opt, curves.initial_loss)
    except DegenerateRange:
        regret = math.nan
    return RunRecord(
        **base,
        output_loss=res.output_loss,
        output_arm=res.output_arm,
        output_rank=int(ground_truth_ranks(curves)[res.output_arm]),
        optimum=opt,
        initial_loss=float(curves.initial_loss),
        regret=regret,
        allocation=tuple(res.allocation),
        wall_clock=wall,
    )


def _cell(args):
    return run_cell(*args)


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> list[RunRecord]:
    """Run the full sweep; records come back sorted by ``(set, policy, budget, seed)``."""
    cells = [
        (sid, cs, pol, b, s)
        for sid, cs in spec.curve_sets()
        for pol in spec.policies
        for b in spec.budgets
        for s in spec.seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_cell, cells))
    else:
        records = [_cell(c) for c in cells]
    return sorted(records, key=lambda r: r.key)


# -- metrics --------------------------------------------------------------------


def hit_rate_at_k(records, curves=None, k: int = 5) -> float:
    """Fraction of records whose output arm is among the true top ``k``.

    ``curves`` may be a CurveSet (used for every record), a mapping from set
    id to CurveSet, or None to use each record's stored ``output_rank``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rows = [r for r in records if r.ok]
    if not rows:
        return math.nan
    hits = 0
    for r in rows:
        if curves is None:
            rank = r.output_rank
        else:
            cs = curves if isinstance(curves, CurveSet) else curves[r.set_id]
            rank = ground_truth_ranks(cs)[r.output_arm]
        hits += rank < k
    return hits / len(rows)


def output_fraction(record: RunRecord) -> float:
    return record.allocation[record.output_arm] / record.budget


def budget_fraction_on_output(records) -> float:
    """Mean share of the budget spent on the arm that produced the output."""
    rows = [r for r in records if r.ok]
    if not rows:
        return math.nan
    return float(np.mean([output_fraction(r) for r in rows]))


# -- CSV ----------------------------------------------------------------------

_COLUMNS = [f.name for f in fields(RunRecord)]


def _fmt(name, value):
    if name == "allocation":
        return " ".join(str(int(b)) for b in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(records, path, wall_clock: bool = False) -> Path:
    """Write one row per record; floats use ``repr`` so they read back exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = _COLUMNS if wall_clock else [c for c in _COLUMNS if c != "wall_clock"]
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_fmt(c, getattr(r, c)) for c in cols])
    return path


_INT_COLS = {"budget", "seed", "output_arm", "output_rank"}
_FLOAT_COLS = {"output_loss", "optimum", "initial_loss", "regret", "wall_clock"}


def read_csv(path) -> list[RunRecord]:
    out = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            d = {}
            for name, v in row.items():
                if name in _INT_COLS:
                    d[name] = int(v)
                elif name in _FLOAT_COLS:
                    d[name] = float(v)
                elif name == "allocation":
                    d[name] = tuple(int(b) for b in v.split())
                else:
                    d[name] = v
            out.append(RunRecord(**d))
    return out


# -- plots --------------------------------------------------------------------

METRICS = ("regret", "hitrate", "allocation")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def metric_values(record: RunRecord, metric: str, k: int = 5) -> float:
    if metric == "regret":
        return record.regret
    if metric == "hitrate":
        return float(record.output_rank < k)
    if metric == "allocation":
        return output_fraction(record)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def summarize(records, metric: str, k: int = 5) -> dict:
    """``{policy: [(budget, mean, std, n), ...]}`` over successful runs."""
    groups: dict = {}
    for r in records:
        if not r.ok:
            continue
        v = metric_values(r, metric, k)
        if math.isnan(v):
            continue
        groups.setdefault(r.policy, {}).setdefault(r.budget, []).append(v)
    out = {}
    for pol in sorted(groups):
        rows = []
        for b in sorted(groups[pol]):
            vals = np.sort(np.asarray(groups[pol][b]))  # sorted: order-free sums
            rows.append((b, float(vals.mean()), float(vals.std()), int(vals.size)))
        out[pol] = rows
    return out


def _num(x: float) -> str:
    return f"{x:.2f}"


def emit_plot(records, metric: str, path, k: int = 5) -> Path:
    """Mean metric against budget, one line per policy with a +-1 std band, as SVG."""
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    table = summarize(records, metric, k)
    if not table:
        raise ValueError("no successful runs to plot")
    W, H, ml, mr, mt, mb = 640, 420, 70, 150, 30, 50
    pw, ph = W - ml - mr, H - mt - mb
    budgets = sorted({b for rows in table.values() for b, *_ in rows})
    lo = min(m - s for rows in table.values() for _, m, s, _ in rows)
    hi = max(m + s for rows in table.values() for _, m, s, _ in rows)
    lo, hi = min(lo, 0.0), max(hi, lo + 1e-9)
    bx0, bx1 = budgets[0], budgets[-1]

    def X(b):
        return ml + (pw / 2 if bx1 == bx0 else pw * (b - bx0) / (bx1 - bx0))

    def Y(v):
        return mt + ph * (1.0 - (v - lo) / (hi - lo))

    ylabel = {"regret": "normalized regret", "hitrate": f"hit rate (top {k})", "allocation": "budget share on output arm"}[metric]
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        "<!-- data",
        "policy,budget,mean,std,n",
    ]
    for pol, rows in table.items():
        for b, m, s, n in rows:
            lines.append(f"{pol},{b},{m!r},{s!r},{n}".replace("--", "- -"))
    lines += [
        "-->",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for b in budgets:
        x = _num(X(b))
        lines.append(f'<line x1="{x}" y1="{mt + ph}" x2="{x}" y2="{mt + ph + 5}" stroke="black"/>')
        lines.append(f'<text x="{x}" y="{mt + ph + 18}" font-size="11" text-anchor="middle">{b}</text>')
    for v in np.linspace(lo, hi, 5):
        y = _num(Y(v))
        lines.append(f'<line x1="{ml - 5}" y1="{y}" x2="{ml}" y2="{y}" stroke="black"/>')
        lines.append(f'<text x="{ml - 8}" y="{y}" font-size="11" text-anchor="end" dominant-baseline="middle">{v:.3g}</text>')
    lines.append(f'<text x="{ml + pw / 2}" y="{H - 10}" font-size="12" text-anchor="middle">budget</text>')
    lines.append(
        f'<text x="15" y="{mt + ph / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 15 {mt + ph / 2})">{ylabel}</text>'
    )
    for i, (pol, rows) in enumerate(table.items()):
        c = _COLORS[i % len(_COLORS)]
        upper = [f"{_num(X(b))},{_num(Y(m + s))}" for b, m, s, _ in rows]
        lower = [f"{_num(X(b))},{_num(Y(m - s))}" for b, m, s, _ in reversed(rows)]
        lines.append(f'<polygon points="{" ".join(upper + lower)}" fill="{c}" fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_num(X(b))},{_num(Y(m))}" for b, m, _, _ in rows)
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="2"/>')
        for b, m, _, _ in rows:
            lines.append(f'<circle cx="{_num(X(b))}" cy="{_num(Y(m))}" r="3" fill="{c}"/>')
        ly = mt + 10 + 18 * i
        lines.append(f'<line x1="{W - mr + 15}" y1="{ly}" x2="{W - mr + 35}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        lines.append(f'<text class="legend" x="{W - mr + 40}" y="{ly + 4}" font-size="11">{escape(pol)}</text>')
    lines.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
