"""Covariance functions shared by the generator and the belief model."""
import math

import numpy as np


def ft_kernel(t, t2, alpha, beta, magnitude=1.0):
    """Freeze-Thaw covariance ``magnitude**2 * beta**alpha / (t + t2 + beta)**alpha``.

    Broadcasts over ``t`` and ``t2``.
    """
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    return magnitude**2 * np.exp(alpha * (math.log(beta) - np.log(t + t2 + beta)))


def se_kernel(x, x2, lengthscale, magnitude=1.0):
    """Squared-exponential covariance ``magnitude**2 * exp(-|x - x2|**2 / (2 l**2))``."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d2 = (x - x2) ** 2
    if d2.ndim == 3:  # pairwise over feature vectors
        d2 = d2.sum(axis=-1)
    return magnitude**2 * np.exp(-0.5 * d2 / lengthscale**2)


def se_gram(X, lengthscale, magnitude=1.0):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return se_kernel(X[:, None, :], X[None, :, :], lengthscale, magnitude)
