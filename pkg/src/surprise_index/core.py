"""
Closed-form Surprise Index for jointly Gaussian observation sequences.

For a stacked observation ``y`` of ``N`` blocks of size ``p`` drawn from
``N(mean, cov)``, every outcome less probable than ``y`` lies outside the
Mahalanobis ellipsoid through ``y``. The quadratic form
``eps = (y - mean)^T cov^{-1} (y - mean)`` is chi-square with ``N*p``
degrees of freedom, so the surprise index is the chi-square survival
function evaluated at ``eps``.
"""
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .special import chi2_cdf, chi2_sf
from .validation import (
    DimensionError,
    as_vector,
    cholesky_with_jitter,
    symmetrize,
)

__all__ = [
    "GaussianJoint",
    "SiEntry",
    "SiTrace",
    "chi2_cdf",
    "mahalanobis_epsilon",
    "surprise_index",
    "cumulative_si",
    "marginalize",
    "prefix_epsilons",
]


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianJoint:
    """
    Mean and block covariance of a stacked observation sequence.

    Parameters
    ----------
    mean : array_like, shape (N*p,)
        Stacked per-step observation means.
    cov : array_like, shape (N*p, N*p)
        Joint covariance. Near-symmetric input (relative asymmetry at most
        1e-9) is symmetrized; anything else is rejected.
    block_dim : int
        Per-step observation dimension ``p``.
    step_labels : sequence of int, optional
        Step number attached to each block, defaults to ``1..N``.
        Marginalization keeps the labels of the retained blocks.

    Attributes
    ----------
    chol : ndarray
        Lower Cholesky factor of ``cov`` (with jitter when needed).
    jitter : float
        Diagonal loading applied before factorization, 0.0 if none.
    """

    mean: np.ndarray
    cov: np.ndarray
    block_dim: int = 1
    step_labels: Optional[Tuple[int, ...]] = None
    chol: np.ndarray = field(init=False, repr=False)
    jitter: float = field(init=False)

    def __post_init__(self):
        mean = as_vector(self.mean, "mean")
        cov = symmetrize(self.cov, "cov")
        p = int(self.block_dim)
        if p < 1:
            raise ValueError(f"block_dim must be positive, got {self.block_dim}")
        if cov.shape[0] != mean.shape[0]:
            raise DimensionError(
                f"mean has length {mean.shape[0]} but cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        if mean.shape[0] == 0 or mean.shape[0] % p:
            raise DimensionError(f"mean length {mean.shape[0]} is not a positive multiple of block_dim {p}")
        steps = mean.shape[0] // p
        labels = tuple(range(1, steps + 1)) if self.step_labels is None else tuple(int(s) for s in self.step_labels)
        if len(labels) != steps:
            raise DimensionError(f"{len(labels)} step labels given for {steps} steps")
        L, jitter = cholesky_with_jitter(cov)
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "cov", _readonly(cov))
        object.__setattr__(self, "block_dim", p)
        object.__setattr__(self, "step_labels", labels)
        object.__setattr__(self, "chol", _readonly(L))
        object.__setattr__(self, "jitter", float(jitter))

    @property
    def steps(self):
        return self.mean.shape[0] // self.block_dim

    @property
    def dim(self):
        return self.mean.shape[0]

    def block(self, i, j):
        """Covariance block between steps ``i`` and ``j`` (1-based positions)."""
        p = self.block_dim
        return self.cov[(i - 1) * p:i * p, (j - 1) * p:j * p]

    def sample(self, size, rng):
        """Draw ``size`` stacked realizations, shape ``(size, N*p)``."""
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ self.chol.T


class SiEntry(NamedTuple):
    step: int
    epsilon: float
    dof: int
    si: float


@dataclass(frozen=True, eq=False)
class SiTrace:
    """Per-step cumulative surprise index values."""

    steps: np.ndarray
    epsilon: np.ndarray
    dof: np.ndarray
    si: np.ndarray

    def __post_init__(self):
        for name in ("steps", "epsilon", "dof", "si"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any((self.si < 0.0) | (self.si > 1.0)):
            raise ValueError("surprise index values must lie in [0, 1]")
        if np.any(np.diff(self.dof) <= 0):
            raise ValueError("degrees of freedom must be strictly increasing")

    def __len__(self):
        return len(self.si)

    def __iter__(self) -> Iterator[SiEntry]:
        for k, e, d, s in zip(self.steps, self.epsilon, self.dof, self.si):
            yield SiEntry(int(k), float(e), int(d), float(s))

    def __getitem__(self, idx):
        return SiEntry(int(self.steps[idx]), float(self.epsilon[idx]), int(self.dof[idx]), float(self.si[idx]))

    @property
    def final(self):
        return float(self.si[-1])


def _residual(joint, y_obs):
    y = as_vector(y_obs, "y_obs")
    if y.shape[0] != joint.dim:
        raise DimensionError(f"y_obs has length {y.shape[0]}, joint has dimension {joint.dim}")
    return y - joint.mean


def _whiten(joint, resid):
    return linalg.solve_triangular(joint.chol, resid, lower=True, check_finite=False)


def mahalanobis_epsilon(joint: GaussianJoint, y_obs) -> float:
    """
    Chi-square statistic ``(y - mean)^T cov^{-1} (y - mean)``.

    Computed by forward substitution against the Cholesky factor; this is
    twice the Mahalanobis distance as normalized with a factor 1/2.
    """
    z = _whiten(joint, _residual(joint, y_obs))
    return float(z @ z)


def _si_from_epsilon(dof, eps):
    # exact mean short-circuits to 1 to avoid CDF round-off at the boundary
    if eps == 0.0:
        return 1.0
    return chi2_sf(dof, eps)


def surprise_index(joint: GaussianJoint, y_obs) -> float:
    """
    Probability mass of all outcomes less probable than ``y_obs``.

    Returns 1 at the mean and tends to 0 far out in the tails.
    """
    return _si_from_epsilon(joint.dim, mahalanobis_epsilon(joint, y_obs))


def prefix_epsilons(joint: GaussianJoint, Y) -> np.ndarray:
    """
    Prefix chi-square statistics for a batch of stacked observations.

    Parameters
    ----------
    Y : array_like, shape (n_samples, N*p)

    Returns
    -------
    ndarray, shape (n_samples, N)
        Entry ``[s, k-1]`` is the statistic of the first ``k`` blocks of row ``s``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != joint.dim:
        raise DimensionError(f"expected observations of shape (n, {joint.dim}), got {Y.shape}")
    Z = linalg.solve_triangular(joint.chol, (Y - joint.mean).T, lower=True, check_finite=False)
    p = joint.block_dim
    per_block = (Z * Z).reshape(joint.steps, p, -1).sum(axis=1)
    return np.cumsum(per_block, axis=0).T


def cumulative_si(joint: GaussianJoint, y_obs) -> SiTrace:
    """
    Surprise index of every leading prefix ``y_1..y_k``, ``k = 1..N``.

    The leading ``k*p`` block of the joint Cholesky factor is exactly the
    factor of the leading ``k*p`` covariance sub-block, and forward
    substitution only reads leading rows. One factorization and one
    triangular solve therefore serve every prefix: each new step extends
    the factor by a block row and adds that block's whitened residual to
    the running statistic.
    """
    resid = _residual(joint, y_obs)
    z = _whiten(joint, resid)
    p = joint.block_dim
    eps = np.cumsum((z * z).reshape(joint.steps, p).sum(axis=1))
    dof = p * np.arange(1, joint.steps + 1)
    si = np.array([_si_from_epsilon(int(d), float(e)) for d, e in zip(dof, eps)])
    return SiTrace(np.asarray(joint.step_labels), eps, dof, si)


def marginalize(joint: GaussianJoint, keep_steps: Sequence[int]) -> GaussianJoint:
    """
    Gaussian marginal over a subset of step blocks.

    Parameters
    ----------
    keep_steps : sequence of int
        Strictly increasing 1-based block positions in ``[1, N]``.
    """
    keep = [int(k) for k in keep_steps]
    if not keep:
        raise ValueError("keep_steps must not be empty")
    if any(b <= a for a, b in zip(keep, keep[1:])):
        raise ValueError(f"keep_steps must be strictly increasing without duplicates: {keep}")
    if keep[0] < 1 or keep[-1] > joint.steps:
        raise ValueError(f"keep_steps must lie in [1, {joint.steps}]: {keep}")
    p = joint.block_dim
    idx = np.concatenate([np.arange((k - 1) * p, k * p) for k in keep])
    labels = tuple(joint.step_labels[k - 1] for k in keep)
    return GaussianJoint(joint.mean[idx], joint.cov[np.ix_(idx, idx)], p, labels)
