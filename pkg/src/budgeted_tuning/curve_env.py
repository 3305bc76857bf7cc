"""Pre-generated learning curves served as an oblivious replay environment.

A :class:`CurveSet` holds one loss sequence per configuration (arm). A
:class:`ReplayEnv` hands those losses out one budget unit at a time, keeps the
trajectory of ``(arm, loss)`` pairs and the per-arm running minimum, and never
lets the total number of steps exceed the budget.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CurveFormatError(ValueError):
    """Raised when a curve file does not follow the expected layout."""


class BudgetExhausted(RuntimeError):
    pass


class CurveExhausted(RuntimeError):
    """The selected arm has no recorded epochs left; pick another arm."""


class DegenerateRange(ValueError):
    pass


@dataclass(frozen=True)
class CurveSet:
    """K learning curves, arm-indexed by ascending configuration id.

    Parameters
    ----------
    curves : tuple of ndarray
        ``curves[k][t - 1]`` is the raw loss of arm ``k`` at epoch ``t``.
    features : ndarray of shape (K, d), optional
        Hyper-parameter coordinates used by a configuration kernel.
    initial_loss : float, optional
        Reference loss for regret normalisation. Defaults to the largest
        first-epoch loss across arms.
    normalized : bool
        Whether every loss is promised to lie in ``[0, 1)``.
    meta : dict
        Free-form extra metadata (e.g. generator settings). Must be JSON
        serialisable to survive :func:`save_curves`.
    """

    curves: tuple
    features: np.ndarray | None = None
    initial_loss: float | None = None
    normalized: bool = False
    config_ids: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        curves = tuple(np.asarray(c, dtype=float).ravel() for c in self.curves)
        if not curves:
            raise ValueError("a CurveSet needs at least one curve")
        for k, c in enumerate(curves):
            if c.size == 0:
                raise ValueError(f"curve {k} is empty")
            if not np.all(np.isfinite(c)):
                raise ValueError(f"curve {k} has non-finite losses")
            c.setflags(write=False)
        object.__setattr__(self, "curves", curves)

        if self.features is not None:
            feats = np.asarray(self.features, dtype=float)
            if feats.ndim == 1:
                feats = feats[:, None]
            if feats.shape[0] != len(curves):
                raise ValueError("features must have one row per curve")
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)

        if self.config_ids is None:
            object.__setattr__(self, "config_ids", tuple(range(len(curves))))
        elif len(self.config_ids) != len(curves):
            raise ValueError("config_ids must have one entry per curve")

        if self.initial_loss is None:
            object.__setattr__(self, "initial_loss", float(max(c[0] for c in curves)))

        if self.normalized:
            for k, c in enumerate(curves):
                if c.min() < 0.0 or c.max() >= 1.0:
                    raise ValueError(f"curve {k} leaves [0, 1) but the set is flagged normalized")

    @property
    def n_arms(self) -> int:
        return len(self.curves)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([c.size for c in self.curves])

    @property
    def max_epochs(self) -> int:
        return int(self.lengths.max())

    def best_losses(self, horizon: int | None = None) -> np.ndarray:
        """Per-arm minimum loss over the first ``horizon`` epochs (all if None)."""
        return np.array([c[:horizon].min() for c in self.curves])


def optimal_loss(curves: CurveSet, budget: int) -> tuple[int, float]:
    """Best arm and its loss when the whole budget goes to a single arm."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    best = curves.best_losses(budget)
    arm = int(np.argmin(best))  # argmin returns the first index on ties
    return arm, float(best[arm])


def normalized_regret(output: float, optimum: float, initial: float) -> float:
    span = initial - optimum
    if span <= 0.0:
        raise DegenerateRange(
            f"initial loss {initial!r} must exceed the optimum {optimum!r}"
        )
    return (output - optimum) / span


def ground_truth_ranks(curves: CurveSet) -> np.ndarray:
    """0-based rank of each arm by best loss over its full recorded curve."""
    best = curves.best_losses()
    order = np.lexsort((np.arange(curves.n_arms), best))
    ranks = np.empty(curves.n_arms, dtype=int)
    ranks[order] = np.arange(curves.n_arms)
    return ranks


class ReplayEnv:
    """Serve a :class:`CurveSet` epoch by epoch under a total budget."""

    def __init__(self, curves: CurveSet, budget: int):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.curves = curves
        self.budget = int(budget)
        self.cursor = np.zeros(curves.n_arms, dtype=int)
        self.best = np.full(curves.n_arms, np.inf)
        self.trajectory: list[tuple[int, float]] = []

    @property
    def n(self) -> int:
        return len(self.trajectory)

    @property
    def remaining(self) -> int:
        return self.budget - self.n

    @property
    def done(self) -> bool:
        return self.n >= self.budget

    def eligible(self) -> np.ndarray:
        """Boolean mask of arms that still have recorded epochs."""
        return self.cursor < self.curves.lengths

    def best_so_far(self) -> float:
        return float(self.best.min())

    def step(self, arm: int) -> float:
        if self.done:
            raise BudgetExhausted(f"budget of {self.budget} units already spent")
        arm = int(arm)
        if not 0 <= arm < self.curves.n_arms:
            raise IndexError(f"arm {arm} out of range")
        t = self.cursor[arm]
        curve = self.curves.curves[arm]
        if t >= curve.size:
            raise CurveExhausted(f"arm {arm} has no epochs beyond {curve.size}")
        loss = float(curve[t])
        self.cursor[arm] = t + 1
        if loss < self.best[arm]:
            self.best[arm] = loss
        self.trajectory.append((arm, loss))
        return loss

    def result(self, policy: str = "", seed: int | None = None) -> "TuningResult":
        if not self.trajectory:
            raise RuntimeError("no steps taken yet")
        losses = [z for _, z in self.trajectory]
        n_best = int(np.argmin(losses))
        return TuningResult(
            trajectory=tuple(self.trajectory),
            output_loss=float(losses[n_best]),
            output_arm=self.trajectory[n_best][0],
            allocation=tuple(int(b) for b in self.cursor),
            policy=policy,
            seed=seed,
        )


@dataclass(frozen=True)
class TuningResult:
    trajectory: tuple
    output_loss: float
    output_arm: int
    allocation: tuple
    policy: str = ""
    seed: int | None = None

    @property
    def budget(self) -> int:
        return len(self.trajectory)


# -- curve file I/O ---------------------------------------------------------

_META_PREFIX = "# meta:"


def load_curves(path) -> CurveSet:
    """Read a ``config_id,epoch,loss[,feat_0,...]`` file.

    An optional first line ``# meta: {json}`` carries ``initial_loss``,
    ``normalized`` and any extra metadata.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()

    meta = {}
    if lines and lines[0].startswith(_META_PREFIX):
        try:
            meta = json.loads(lines[0][len(_META_PREFIX):])
        except json.JSONDecodeError as exc:
            raise CurveFormatError(f"unreadable metadata line: {exc}") from exc
        lines = lines[1:]

    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CurveFormatError("empty curve file") from None
    if header[:3] != ["config_id", "epoch", "loss"]:
        raise CurveFormatError(f"bad header {header!r}")
    n_feat = len(header) - 3

    rows: dict[int, dict[int, float]] = {}
    feats: dict[int, tuple] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CurveFormatError(f"line {lineno}: expected {len(header)} fields")
        try:
            cid = int(row[0])
            epoch = int(row[1])
            loss = float(row[2])
            feat = tuple(float(v) for v in row[3:])
        except ValueError as exc:
            raise CurveFormatError(f"line {lineno}: {exc}") from None
        if cid < 0 or epoch < 1:
            raise CurveFormatError(f"line {lineno}: negative id or epoch < 1")
        if not math.isfinite(loss) or not all(math.isfinite(v) for v in feat):
            raise CurveFormatError(f"line {lineno}: non-finite value")
        per = rows.setdefault(cid, {})
        if epoch in per:
            raise CurveFormatError(f"line {lineno}: duplicate (config {cid}, epoch {epoch})")
        per[epoch] = loss
        if n_feat:
            if feats.setdefault(cid, feat) != feat:
                raise CurveFormatError(f"line {lineno}: features differ within config {cid}")

    if not rows:
        raise CurveFormatError("no data rows")
    ids = sorted(rows)
    curves = []
    for cid in ids:
        epochs = sorted(rows[cid])
        if epochs != list(range(1, len(epochs) + 1)):
            raise CurveFormatError(f"config {cid}: epochs are not contiguous from 1")
        curves.append([rows[cid][e] for e in epochs])

    initial = meta.pop("initial_loss", None)
    normalized = bool(meta.pop("normalized", False))
    return CurveSet(
        curves=tuple(curves),
        features=np.array([feats[c] for c in ids]) if n_feat else None,
        initial_loss=initial,
        normalized=normalized,
        config_ids=tuple(ids),
        meta=meta,
    )


def save_curves(curves: CurveSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"initial_loss": curves.initial_loss, "normalized": curves.normalized}
    meta.update(curves.meta)
    n_feat = 0 if curves.features is None else curves.features.shape[1]
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(_META_PREFIX + " " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["config_id", "epoch", "loss"] + [f"feat_{j}" for j in range(n_feat)])
        for k, (cid, curve) in enumerate(zip(curves.config_ids, curves.curves)):
            feat = [] if n_feat == 0 else [repr(float(v)) for v in curves.features[k]]
            for t, loss in enumerate(curve, start=1):
                writer.writerow([cid, t, repr(float(loss))] + feat)
    return path
