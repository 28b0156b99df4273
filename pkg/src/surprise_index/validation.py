"""Input validation helpers shared by the model builders and estimators."""
import numpy as np
from scipy import linalg

SYMMETRY_RTOL = 1e-9
PSD_RTOL = 1e-10


class DimensionError(ValueError):
    """Array shapes that do not fit together."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A covariance that failed Cholesky factorization even after jitter."""


class ModelValidationError(ValueError):
    """Model parameters violating one or more invariants; ``problems`` lists them all."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def as_vector(x, name="x", length=None):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(a, name="a", shape=None):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def symmetrize(cov, name="cov", rtol=SYMMETRY_RTOL):
    """
    Return ``(cov + cov.T) / 2`` if ``cov`` is symmetric up to ``rtol``
    relative to its largest entry, else raise ``ValueError``.
    """
    cov = as_matrix(cov, name)
    if cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {cov.shape}")
    scale = np.max(np.abs(cov)) if cov.size else 0.0
    asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
    if asym > rtol * scale:
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3g}, scale {scale:.3g})")
    return 0.5 * (cov + cov.T)


def is_psd(cov, rtol=PSD_RTOL):
    if cov.size == 0:
        return True
    w = np.linalg.eigvalsh(cov)
    return bool(w[0] >= -rtol * max(1.0, abs(w[-1])))


def check_covariance(cov, name, definite=False):
    """List the invariant violations of a covariance matrix (empty when valid)."""
    problems = []
    if cov.shape[0] != cov.shape[1]:
        return [f"{name} must be square, got shape {cov.shape}"]
    scale = np.max(np.abs(cov)) if cov.size else 0.0
    if cov.size and np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
        problems.append(f"{name} is not symmetric")
        return problems
    sym = 0.5 * (cov + cov.T)
    if definite and not is_pd(sym):
        problems.append(f"{name} is not positive definite")
    elif not definite and not is_psd(sym):
        problems.append(f"{name} is not positive semidefinite")
    return problems


def is_pd(cov):
    try:
        linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        return False
    return True


def cholesky_with_jitter(cov):
    """
    Lower Cholesky factor of ``cov`` with a single jittered retry.

    The retry adds ``1e-10 * trace(cov) / dim`` to the diagonal.

    Returns
    -------
    L : ndarray
        Lower-triangular factor.
    jitter : float
        Diagonal loading actually applied (0.0 if none was needed).
    """
    try:
        return linalg.cholesky(cov, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    dim = cov.shape[0]
    jitter = 1e-10 * float(np.trace(cov)) / dim
    if jitter > 0.0:
        try:
            return linalg.cholesky(cov + jitter * np.eye(dim), lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            pass
    raise NotPositiveDefiniteError(
        f"covariance of size {dim} is not positive definite (jitter {jitter:.3g} did not help)"
    )


def psd_sqrt(cov):
    """A square-root factor ``S`` with ``S @ S.T == cov`` for a PSD matrix (zero allowed)."""
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))
