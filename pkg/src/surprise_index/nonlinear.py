"""
Sigma-point propagation of a Gaussian prior through deterministic nonlinear
dynamics, and the joint observation distribution it implies.

Each of the ``2n + 1`` symmetric sigma points is integrated through the
dynamics with fixed-step RK4 and its whole trajectory is kept, so that the
cross-time covariance between any two steps is the weighted cross-moment of
the point deviations at those steps.
"""
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .core import GaussianJoint
from .validation import (
    DimensionError,
    ModelValidationError,
    NotPositiveDefiniteError,
    as_vector,
    check_covariance,
    symmetrize,
)

__all__ = [
    "NonlinearModel",
    "SigmaSet",
    "PropagationError",
    "default_kappa",
    "make_sigma_points",
    "apply_map",
    "propagate",
    "cross_cov",
    "build_joint_nonlinear",
    "rk4",
]


class PropagationError(ArithmeticError):
    """Non-finite state produced while integrating the dynamics."""

    def __init__(self, step, point, message=None):
        self.step = step
        self.point = point
        super().__init__(message or f"non-finite state at step {step}, sigma point {point}")


def rk4(f, x, u, t, dt, substeps):
    """
    Integrate ``dx/dt = f(x, u, t)`` over ``dt`` with ``substeps`` classical
    RK4 steps; ``x`` may carry leading batch axes.
    """
    h = dt / substeps
    for i in range(substeps):
        s = t + i * h
        k1 = f(x, u, s)
        k2 = f(x + 0.5 * h * k1, u, s + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, u, s + 0.5 * h)
        k4 = f(x + h * k3, u, s + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


@dataclass(frozen=True, eq=False)
class NonlinearModel:
    """
    Deterministic continuous-time dynamics observed through a linear sensor.

    Parameters
    ----------
    dynamics : callable
        ``f(x, u, t) -> dx/dt``. Must accept ``x`` with leading batch axes,
        shape ``(..., n)``, and return the same shape.
    mu0, P0 : array_like
        Gaussian prior on the initial state.
    R : array_like, shape (p, p)
        Measurement noise covariance, positive definite.
    dt : float
        Duration of one measurement step.
    H : array_like, shape (p, n), optional
        Measurement matrix; identity when omitted.
    substeps : int
        RK4 substeps per measurement step.
    control_dim : int
        Length of the control vector ``u``.
    impulse_matrix : array_like, shape (n, control_dim), optional
        When given, controls act impulsively: the state jumps by
        ``impulse_matrix @ u`` at the start of the step and ``f`` sees zero
        control. Otherwise ``u`` is held constant over the step.
    t0 : float
        Time at step 0.
    """

    dynamics: Callable
    mu0: np.ndarray
    P0: np.ndarray
    R: np.ndarray
    dt: float
    H: Optional[np.ndarray] = None
    substeps: int = 10
    control_dim: int = 0
    impulse_matrix: Optional[np.ndarray] = None
    t0: float = 0.0
    name: str = "nonlinear"

    def __post_init__(self):
        mu0 = as_vector(self.mu0, "mu0")
        n = mu0.shape[0]
        P0 = np.asarray(self.P0, dtype=float)
        if P0.shape != (n, n):
            raise DimensionError(f"P0 must be {n}x{n}, got {P0.shape}")
        H = np.eye(n) if self.H is None else np.asarray(self.H, dtype=float)
        if H.ndim != 2 or H.shape[1] != n:
            raise DimensionError(f"H must have {n} columns, got shape {H.shape}")
        p = H.shape[0]
        R = np.asarray(self.R, dtype=float)
        if R.shape != (p, p):
            raise DimensionError(f"R must be {p}x{p}, got {R.shape}")
        problems = check_covariance(P0, "P0") + check_covariance(R, "R", definite=True)
        if not self.dt > 0:
            problems.append(f"dt must be positive, got {self.dt}")
        if int(self.substeps) < 1:
            problems.append(f"substeps must be at least 1, got {self.substeps}")
        if problems:
            raise ModelValidationError(problems)
        B = None
        if self.impulse_matrix is not None:
            B = np.asarray(self.impulse_matrix, dtype=float)
            if B.shape != (n, self.control_dim):
                raise DimensionError(f"impulse_matrix must be {n}x{self.control_dim}, got {B.shape}")
        for name, val in (("mu0", mu0), ("P0", symmetrize(P0, "P0")), ("H", H),
                          ("R", symmetrize(R, "R")), ("impulse_matrix", B)):
            if val is not None:
                val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "substeps", int(self.substeps))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def state_dim(self):
        return self.mu0.shape[0]

    @property
    def obs_dim(self):
        return self.H.shape[0]

    def step(self, x, u, k):
        """Advance states ``x`` (shape ``(..., n)``) from step ``k`` to ``k + 1``."""
        u = np.zeros(self.control_dim) if u is None else np.asarray(u, dtype=float)
        if self.impulse_matrix is not None:
            x = x + u @ self.impulse_matrix.T
            u = np.zeros(self.control_dim)
        return rk4(self.dynamics, x, u, self.t0 + k * self.dt, self.dt, self.substeps)

    def nominal_trajectory(self, steps, controls=None):
        """Noise-free trajectory from ``mu0``, shape ``(steps + 1, n)``."""
        controls = _controls(self, steps, controls)
        out = np.empty((steps + 1, self.state_dim))
        out[0] = self.mu0
        for k in range(steps):
            out[k + 1] = self.step(out[k], controls[k], k)
        return out


def _controls(model, steps, controls):
    if controls is None:
        return np.zeros((steps, model.control_dim))
    c = np.asarray(controls, dtype=float)
    if c.ndim == 1:
        c = np.broadcast_to(c, (steps, c.shape[0]))
    if c.shape != (steps, model.control_dim):
        raise DimensionError(f"controls must have shape ({steps}, {model.control_dim}), got {c.shape}")
    return c


@dataclass(frozen=True, eq=False)
class SigmaSet:
    """
    Weighted sigma points with their propagation history.

    ``points[k]`` holds the ``2n + 1`` points at step ``k`` (row 0 is the
    central point); ``weights`` sum to one.
    """

    points: np.ndarray
    weights: np.ndarray
    kappa: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 2:
            pts = pts[None]
        w = np.array(self.weights, dtype=float, copy=True)
        if pts.shape[1] != w.shape[0] or w.shape[0] != 2 * pts.shape[2] + 1:
            raise DimensionError(f"expected 2n+1 points and weights, got points {pts.shape}, weights {w.shape}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n_steps(self):
        """Number of propagated steps (history length minus the initial set)."""
        return self.points.shape[0] - 1

    @property
    def state_dim(self):
        return self.points.shape[2]

    def mean(self, k=-1):
        return self.weights @ self.points[k]

    def cov(self, k=-1):
        return cross_cov(self, k, k)

    def deviations(self, k):
        return self.points[k] - self.mean(k)


def default_kappa(n):
    """``3 - n``, raised where needed so that ``n + kappa >= 0.5``."""
    return max(3.0 - n, 0.5 - n)


def make_sigma_points(mean, cov, kappa=None) -> SigmaSet:
    """
    Symmetric sigma set matching ``mean`` and ``cov`` exactly.

    The central point carries weight ``kappa / (n + kappa)``; the points
    ``mean +/- column_i(chol((n + kappa) cov))`` carry ``1 / (2 (n + kappa))`` each.
    """
    mean = as_vector(mean, "mean")
    n = mean.shape[0]
    cov = symmetrize(cov, "cov")
    if cov.shape != (n, n):
        raise DimensionError(f"cov must be {n}x{n}, got {cov.shape}")
    kappa = default_kappa(n) if kappa is None else float(kappa)
    if not n + kappa > 0:
        raise ValueError(f"n + kappa must be positive, got n={n}, kappa={kappa}")
    try:
        S = linalg.cholesky((n + kappa) * cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("sigma-point covariance is not positive definite") from exc
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    pts[1:n + 1] = mean + S.T
    pts[n + 1:] = mean - S.T
    w = np.full(2 * n + 1, 0.5 / (n + kappa))
    w[0] = 1.0 - w[1:].sum()  # kappa / (n + kappa), taken as the remainder so the sum is 1
    return SigmaSet(pts, w, kappa)


def apply_map(sigma: SigmaSet, fn, step=None) -> SigmaSet:
    """
    Push the latest sigma points through ``fn`` (acting on ``(2n+1, n)``
    arrays) and append the result to the history.
    """
    step = sigma.n_steps + 1 if step is None else step
    with np.errstate(over="ignore", invalid="ignore"):
        x = np.asarray(fn(sigma.points[-1]), dtype=float)
    if x.shape != sigma.points.shape[1:]:
        raise DimensionError(f"map returned shape {x.shape}, expected {sigma.points.shape[1:]}")
    bad = ~np.all(np.isfinite(x), axis=1)
    if np.any(bad):
        raise PropagationError(step, int(np.flatnonzero(bad)[0]))
    return SigmaSet(np.concatenate([sigma.points, x[None]]), sigma.weights, sigma.kappa)


def propagate(model: NonlinearModel, sigma: SigmaSet, steps: int, controls=None) -> SigmaSet:
    """
    Extend the history of ``sigma`` by ``steps`` steps of ``model``.

    Propagation resumes from the last stored step, so repeated calls
    continue one trajectory.
    """
    if sigma.state_dim != model.state_dim:
        raise DimensionError(f"sigma points have dimension {sigma.state_dim}, model has {model.state_dim}")
    controls = _controls(model, steps, controls)
    start = sigma.n_steps
    for i in range(steps):
        k = start + i
        sigma = apply_map(sigma, lambda x: model.step(x, controls[i], k), step=k + 1)
    return sigma


def cross_cov(sigma: SigmaSet, i: int, j: int) -> np.ndarray:
    """Weighted cross-moment of the point deviations at steps ``i`` and ``j``."""
    last = sigma.n_steps
    for s in (i, j):
        if not -(last + 1) <= s <= last:
            raise IndexError(f"step {s} outside the propagated horizon 0..{last}")
    i %= last + 1
    j %= last + 1
    if i > j:
        # one canonical evaluation order makes cross_cov(i, j) == cross_cov(j, i).T exactly
        return cross_cov(sigma, j, i).T
    Di = sigma.deviations(i)
    C = (Di * sigma.weights[:, None]).T @ sigma.deviations(j)
    return 0.5 * (C + C.T) if i == j else C


def build_joint_nonlinear(model: NonlinearModel, steps: int, controls=None, kappa=None) -> GaussianJoint:
    """
    Joint distribution of measurements ``y_1..y_steps`` via sigma points.

    Blocks are ``H cross_cov(i, j) H^T`` plus ``R`` on the diagonal; block
    means are ``H`` times the sigma-point means. A warning is issued when the
    joint covariance needed diagonal jitter.
    """
    sigma = propagate(model, make_sigma_points(model.mu0, model.P0, kappa), steps, controls)
    n, p = model.state_dim, model.obs_dim
    w = sigma.weights
    means = np.einsum("s,ksn->kn", w, sigma.points[1:])
    D = sigma.points[1:] - means[:, None, :]             # (N, 2n+1, n)
    Dy = np.einsum("pn,ksn->skp", model.H, D).reshape(2 * n + 1, steps * p)
    cov = (Dy * w[:, None]).T @ Dy
    cov = 0.5 * (cov + cov.T)
    cov += np.kron(np.eye(steps), model.R)
    mean = (means @ model.H.T).reshape(-1)
    joint = GaussianJoint(mean, cov, p)
    if joint.jitter:
        warnings.warn(f"sigma-point joint covariance needed jitter {joint.jitter:.3g}", RuntimeWarning)
    return joint
