"""
Brute-force surprise index estimates.

These do not use the chi-square identity. ``grid_si`` integrates the joint
density over the region where it is strictly below the density at the
observation; ``mc_si`` counts samples that are less probable than the
observation. Both serve as independent checks of the closed form.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .core import GaussianJoint
from .validation import DimensionError, as_vector

__all__ = ["GridSpec", "McSpec", "grid_si", "mc_si", "RNG_ALGORITHM", "make_rng", "default_points_per_dim"]

RNG_ALGORITHM = "Philox4x64-10 (numpy.random.Philox), streams split with numpy.random.SeedSequence"
DEFAULT_CELL_CAP = 10**8
GRID_HALF_WIDTH = 8.0
_CHUNK = 2**20


def make_rng(seed):
    """Counter-based generator; ``seed`` may be an int or a ``SeedSequence``."""
    return np.random.Generator(np.random.Philox(seed))


def default_points_per_dim(dim):
    """Grid resolution used when none is given; keeps the cell count near 1.5e7 at most."""
    return {1: 10_000, 2: 1_000, 3: 300}.get(dim, max(2, int(1.5e7 ** (1.0 / dim))))


@dataclass(frozen=True)
class GridSpec:
    """
    Rectangular evaluation grid.

    Parameters
    ----------
    bounds : sequence of (lo, hi)
        Per-dimension integration limits in measurement units.
    points_per_dim : int
        Cells per dimension; density is evaluated at cell midpoints.
    cell_cap : int
        Largest total cell count accepted.
    """

    bounds: Tuple[Tuple[float, float], ...]
    points_per_dim: int
    cell_cap: int = DEFAULT_CELL_CAP

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.points_per_dim < 1:
            raise ValueError("points_per_dim must be positive")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"grid bound lo={lo} is not below hi={hi}")
        if self.n_cells > self.cell_cap:
            raise ValueError(
                f"grid has {self.n_cells} cells, above the cap of {self.cell_cap}; use mc_si instead"
            )

    @property
    def n_cells(self):
        return self.points_per_dim ** len(self.bounds)

    @classmethod
    def around(cls, joint: GaussianJoint, points_per_dim: Optional[int] = None,
               half_width: float = GRID_HALF_WIDTH, cell_cap: int = DEFAULT_CELL_CAP):
        """Grid spanning ``mean +/- half_width * sigma`` on every marginal."""
        if points_per_dim is None:
            points_per_dim = default_points_per_dim(joint.dim)
        if points_per_dim ** joint.dim > cell_cap:
            raise ValueError(
                f"a {joint.dim}-dimensional grid with {points_per_dim} points per dimension "
                f"exceeds the cap of {cell_cap} cells; use mc_si instead"
            )
        sd = np.sqrt(np.diag(joint.cov))
        bounds = tuple((m - half_width * s, m + half_width * s) for m, s in zip(joint.mean, sd))
        return cls(bounds, points_per_dim, cell_cap)


@dataclass(frozen=True)
class McSpec:
    sample_count: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_count < 100:
            raise ValueError(f"sample_count must be at least 100, got {self.sample_count}")


def _log_density(x, mean, L):
    # x: (n, d)
    d = mean.shape[0]
    z = linalg.solve_triangular(L, (x - mean).T, lower=True, check_finite=False)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * np.sum(z * z, axis=0) - 0.5 * (d * math.log(2.0 * math.pi) + log_det)


def grid_si(joint: GaussianJoint, y_obs, spec: Optional[GridSpec] = None) -> float:
    """
    Surprise index by summing density times cell volume over every grid
    cell whose density is strictly below the density at ``y_obs``.
    """
    y = as_vector(y_obs, "y_obs", joint.dim)
    if spec is None:
        spec = GridSpec.around(joint)
    if len(spec.bounds) != joint.dim:
        raise DimensionError(f"grid has {len(spec.bounds)} dimensions, joint has {joint.dim}")
    n = spec.points_per_dim
    axes = []
    for lo, hi in spec.bounds:
        h = (hi - lo) / n
        axes.append(lo + h * (np.arange(n) + 0.5))
    cell_volume = float(np.prod([(hi - lo) / n for lo, hi in spec.bounds]))

    L = np.asarray(joint.chol)
    mean = np.asarray(joint.mean)
    log_obs = _log_density(y[None, :], mean, L)[0]

    total = 0.0
    n_cells = spec.n_cells
    shape = (n,) * joint.dim
    for start in range(0, n_cells, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, n_cells))
        idx = np.unravel_index(flat, shape)
        pts = np.column_stack([ax[i] for ax, i in zip(axes, idx)])
        logp = _log_density(pts, mean, L)
        below = logp < log_obs
        total += float(np.sum(np.exp(logp[below])))
    return min(1.0, max(0.0, total * cell_volume))


def mc_si(joint: GaussianJoint, y_obs, spec: McSpec = McSpec()) -> Tuple[float, float]:
    """
    Monte Carlo surprise index.

    Returns
    -------
    estimate : float
        Fraction of samples whose density is strictly below that of ``y_obs``.
    stderr : float
        Binomial standard error of the estimate.
    """
    y = as_vector(y_obs, "y_obs", joint.dim)
    rng = make_rng(spec.rng_seed)
    L = np.asarray(joint.chol)
    mean = np.asarray(joint.mean)
    log_obs = _log_density(y[None, :], mean, L)[0]
    count = 0
    remaining = spec.sample_count
    while remaining:
        m = min(remaining, _CHUNK // max(1, joint.dim))
        samples = mean + rng.standard_normal((m, joint.dim)) @ L.T
        count += int(np.count_nonzero(_log_density(samples, mean, L) < log_obs))
        remaining -= m
    est = count / spec.sample_count
    return est, math.sqrt(est * (1.0 - est) / spec.sample_count)
