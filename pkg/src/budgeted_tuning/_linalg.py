import numpy as np
from scipy import linalg


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


def jittered_cholesky(K, jitter=1e-10, max_jitter=1e-6):
    """Lower Cholesky factor of ``K``, adding diagonal jitter x10 until it works."""
    K = np.asarray(K, dtype=float)
    try:
        return linalg.cholesky(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    eye = np.eye(K.shape[0])
    while jitter <= max_jitter * (1 + 1e-12):
        try:
            return linalg.cholesky(K + jitter * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefinite(
        f"matrix of size {K.shape[0]} not positive definite even with jitter {max_jitter:g}"
    )


def cho_solve(L, b):
    return linalg.cho_solve((L, True), b, check_finite=False)


def logdet_from_cholesky(L):
    return 2.0 * np.sum(np.log(np.diag(L)))
