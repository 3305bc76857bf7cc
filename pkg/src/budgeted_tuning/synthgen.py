"""Synthetic learning curves drawn from the Freeze-Thaw generative model.

Each arm gets an asymptote ``f_k`` from a squared-exponential GP over a 1-D
feature grid, plus a curve deviation from a zero-mean GP with the Freeze-Thaw
time kernel, plus a little i.i.d. noise. The whole set is then optionally
mapped affinely into ``[0.01, 0.99]``.

Curves are drawn on raw epoch time and reported once per budget unit of
``epochs_per_unit`` epochs (the loss at the end of each block). On the unit
axis this is the same kernel with ``beta / epochs_per_unit``, which is what
the stored belief hyper-parameters use.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._linalg import jittered_cholesky
from .curve_env import CurveSet
from .gp import GPHypers
from .kernels import ft_kernel, se_gram, se_kernel

__all__ = ["SynthSpec", "arm_features", "sample_curveset", "se_gram", "se_kernel"]


@dataclass(frozen=True)
class SynthSpec:
    n_arms: int = 84
    epochs: int = 48
    asym_lengthscale: float = 0.8
    asym_magnitude: float = 1.0
    ft_alpha: float = 1.5
    ft_beta: float = 5.0
    ft_magnitude: float = 10.0
    noise_std: float = 1e-3
    seed: int = 0
    rescale: bool = True
    epochs_per_unit: int = 6

    def __post_init__(self):
        if self.n_arms < 1 or self.epochs < 1 or self.epochs_per_unit < 1:
            raise ValueError("n_arms, epochs and epochs_per_unit must be >= 1")
        for name in ("asym_lengthscale", "ft_alpha", "ft_beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        # zero magnitudes are allowed: they switch that component off
        for name in ("asym_magnitude", "ft_magnitude", "noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def arm_features(n_arms: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_arms)[:, None]


def _draw(rng, K, size):
    if not np.any(K):
        return np.zeros(size)
    L = jittered_cholesky(K)
    return L @ rng.standard_normal(size)


def sample_curveset(spec: SynthSpec) -> CurveSet:
    """Draw one :class:`CurveSet`; identical specs give identical sets."""
    rng = np.random.default_rng(spec.seed)
    X = arm_features(spec.n_arms)
    asym = _draw(rng, se_gram(X, spec.asym_lengthscale, spec.asym_magnitude), spec.n_arms)

    t = spec.epochs_per_unit * np.arange(1, spec.epochs + 1, dtype=float)
    Kt = ft_kernel(t[:, None], t[None, :], spec.ft_alpha, spec.ft_beta, spec.ft_magnitude)
    L = jittered_cholesky(Kt) if spec.ft_magnitude > 0 else None

    Y = np.empty((spec.n_arms, spec.epochs))
    for k in range(spec.n_arms):
        dev = L @ rng.standard_normal(spec.epochs) if L is not None else 0.0
        noise = spec.noise_std * rng.standard_normal(spec.epochs) if spec.noise_std > 0 else 0.0
        Y[k] = asym[k] + dev + noise

    scale, offset = 1.0, 0.0
    if spec.rescale:
        lo, hi = Y.min(), Y.max()
        if hi > lo:
            scale = 0.98 / (hi - lo)
            offset = 0.01 - scale * lo
        else:
            offset = 0.5 - lo
        Y = np.clip(scale * Y + offset, 0.0, np.nextafter(1.0, 0.0))

    hypers = GPHypers(
        ft_alpha=spec.ft_alpha,
        ft_beta=spec.ft_beta / spec.epochs_per_unit,
        time_magnitude=max(scale * spec.ft_magnitude, 1e-12),
        x_lengthscale=spec.asym_lengthscale,
        x_magnitude=max(scale * spec.asym_magnitude, 1e-12),
        independent=False,
        mean=offset,
        noise_std=scale * spec.noise_std,
    )
    return CurveSet(
        curves=tuple(Y),
        features=X,
        normalized=spec.rescale,
        meta={
            "synth": spec.to_dict(),
            "scale": scale,
            "offset": offset,
            "hypers": hypers.to_dict(),
        },
    )
