"""
Joint observation distribution of a discrete-time linear Gauss-Markov system.

The system is

    x_{k+1} = F_k x_k + G_k u_k + Gamma_k w_k,   w_k ~ N(0, Q_k),   k = 0..N-1
    y_k     = H_k x_k + v_k,                     v_k ~ N(0, R_k),   k = 1..N
    x_0 ~ N(mu0, P0)

and the stacked observations ``y_1..y_N`` are jointly Gaussian. Their mean
follows the noise-free state recursion; the covariance is assembled from the
state covariance recursion ``P_{k+1} = F_k P_k F_k^T + Gamma_k Q_k Gamma_k^T``
and the cross-time blocks ``cov(x_i, x_j) = P_i Phi(i, j)^T`` for ``i <= j``.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .core import GaussianJoint
from .validation import (
    DimensionError,
    ModelValidationError,
    check_covariance,
    psd_sqrt,
)

__all__ = [
    "LinearSystem",
    "TransitionCache",
    "stm",
    "joint_mean",
    "joint_cov",
    "build_joint",
    "simulate",
]


def _per_step(a, steps, name, ndim=2):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == ndim:
        arr = np.broadcast_to(arr, (steps,) + arr.shape)
    elif arr.ndim != ndim + 1 or arr.shape[0] != steps:
        raise DimensionError(
            f"{name} must be a single {ndim}-d array or a stack of {steps}, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


class TransitionCache:
    """Memoized products ``Phi(a, b) = F_{b-1} ... F_a``."""

    def __init__(self, F):
        self._F = F
        self._n = F.shape[1]
        self._table: Dict[Tuple[int, int], np.ndarray] = {}

    def get(self, a, b):
        if a > b:
            raise ValueError(f"transition requires a <= b, got a={a}, b={b}")
        if a < 0 or b > self._F.shape[0]:
            raise ValueError(f"transition steps must lie in [0, {self._F.shape[0]}], got ({a}, {b})")
        key = (a, b)
        hit = self._table.get(key)
        if hit is not None:
            return hit
        if a == b:
            out = np.eye(self._n)
        else:
            out = self._F[b - 1] @ self.get(a, b - 1)
        out.setflags(write=False)
        self._table[key] = out
        return out

    def __len__(self):
        return len(self._table)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """
    Time-varying linear Gaussian state-space model over ``horizon`` steps.

    Every matrix argument may be given once (time-invariant, broadcast over
    steps) or as a stack along a leading step axis. Dynamics quantities
    ``F, G, Gamma, Q, u`` are indexed ``k = 0..N-1``; measurement quantities
    ``H, R`` are indexed ``k = 1..N`` and stored at position ``k - 1``.

    Parameters
    ----------
    F : (n, n) or (N, n, n)
    H : (p, n) or (N, p, n)
    R : (p, p) or (N, p, p)
        Measurement noise covariance, positive definite.
    mu0 : (n,)
    P0 : (n, n)
        Prior state covariance, positive semidefinite.
    horizon : int
    G : (n, m) or (N, n, m), optional
    u : (m,) or (N, m), optional
        Known control inputs.
    Gamma : (n, q) or (N, n, q), optional
    Q : (q, q) or (N, q, q), optional
        Process noise covariance, positive semidefinite. Omitted means no
        process noise.
    """

    F: np.ndarray
    H: np.ndarray
    R: np.ndarray
    mu0: np.ndarray
    P0: np.ndarray
    horizon: int
    G: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    Gamma: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    transitions: TransitionCache = field(init=False, repr=False)

    def __post_init__(self):
        N = int(self.horizon)
        if N < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        F = _per_step(self.F, N, "F")
        n = F.shape[1]
        if F.shape[1:] != (n, n):
            raise DimensionError(f"F must be square, got per-step shape {F.shape[1:]}")
        H = _per_step(self.H, N, "H")
        if H.shape[2] != n:
            raise DimensionError(f"H has {H.shape[2]} columns, state dimension is {n}")
        p = H.shape[1]
        R = _per_step(self.R, N, "R")
        if R.shape[1:] != (p, p):
            raise DimensionError(f"R must be {p}x{p}, got {R.shape[1:]}")
        mu0 = np.asarray(self.mu0, dtype=float).reshape(-1)
        if mu0.shape != (n,):
            raise DimensionError(f"mu0 has length {mu0.shape[0]}, state dimension is {n}")
        P0 = np.asarray(self.P0, dtype=float)
        if P0.shape != (n, n):
            raise DimensionError(f"P0 must be {n}x{n}, got {P0.shape}")

        if self.G is None:
            G = np.zeros((N, n, 0))
        else:
            G = _per_step(self.G, N, "G")
        m = G.shape[2]
        if G.shape[1] != n:
            raise DimensionError(f"G has {G.shape[1]} rows, state dimension is {n}")
        if self.u is None:
            u = np.zeros((N, m))
        else:
            u = _per_step(self.u, N, "u", ndim=1)
        if u.shape[1] != m:
            raise DimensionError(f"controls have dimension {u.shape[1]}, G has {m} columns")

        if self.Gamma is None and self.Q is None:
            Gamma = np.zeros((N, n, 0))
            Q = np.zeros((N, 0, 0))
        else:
            Gamma = _per_step(np.eye(n) if self.Gamma is None else self.Gamma, N, "Gamma")
            q = Gamma.shape[2]
            Q = _per_step(np.zeros((q, q)) if self.Q is None else self.Q, N, "Q")
            if Gamma.shape[1] != n:
                raise DimensionError(f"Gamma has {Gamma.shape[1]} rows, state dimension is {n}")
            if Q.shape[1:] != (q, q):
                raise DimensionError(f"Q must be {q}x{q}, got {Q.shape[1:]}")

        problems = check_covariance(P0, "P0")
        for k in range(N):
            if Q.shape[1]:
                problems += [f"{msg} (k={k})" for msg in check_covariance(Q[k], "Q")]
            problems += [f"{msg} (k={k + 1})" for msg in check_covariance(R[k], "R", definite=True)]
        problems = _first_per_kind(problems)
        if problems:
            raise ModelValidationError(problems)

        P0 = 0.5 * (P0 + P0.T)
        mu0.setflags(write=False)
        P0.setflags(write=False)
        for name, val in (("F", F), ("H", H), ("R", R), ("mu0", mu0), ("P0", P0),
                          ("G", G), ("u", u), ("Gamma", Gamma), ("Q", Q)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "horizon", N)
        object.__setattr__(self, "transitions", TransitionCache(F))

    @property
    def state_dim(self):
        return self.F.shape[1]

    @property
    def obs_dim(self):
        return self.H.shape[1]

    @property
    def control_dim(self):
        return self.G.shape[2]

    def with_controls(self, u):
        """Copy of the system with a different known control sequence."""
        return LinearSystem(self.F, self.H, self.R, self.mu0, self.P0, self.horizon,
                            G=self.G, u=u, Gamma=self.Gamma, Q=self.Q)


def _first_per_kind(problems):
    # broadcast stacks repeat one message per step; keep the first occurrence
    seen = {}
    for msg in problems:
        base = msg.rsplit(" (k=", 1)[0]
        seen.setdefault(base, msg)
    return list(seen.values())


def stm(sys: LinearSystem, a: int, b: int) -> np.ndarray:
    """State transition ``Phi(a, b) = F_{b-1} ... F_a`` (identity when ``a == b``)."""
    return sys.transitions.get(a, b)


def _state_means(sys):
    m = np.empty((sys.horizon + 1, sys.state_dim))
    m[0] = sys.mu0
    for k in range(sys.horizon):
        m[k + 1] = sys.F[k] @ m[k] + sys.G[k] @ sys.u[k]
    return m


def _state_covs(sys):
    P = np.empty((sys.horizon + 1, sys.state_dim, sys.state_dim))
    P[0] = sys.P0
    for k in range(sys.horizon):
        W = sys.Gamma[k] @ sys.Q[k] @ sys.Gamma[k].T
        P[k + 1] = sys.F[k] @ P[k] @ sys.F[k].T + W
    return P


def joint_mean(sys: LinearSystem) -> np.ndarray:
    """Stacked measurement means ``H_k m_k`` for ``k = 1..N``."""
    m = _state_means(sys)
    return np.concatenate([sys.H[k - 1] @ m[k] for k in range(1, sys.horizon + 1)])


def joint_cov(sys: LinearSystem) -> np.ndarray:
    """Block covariance of the stacked measurements ``y_1..y_N``."""
    N, p = sys.horizon, sys.obs_dim
    P = _state_covs(sys)
    out = np.empty((N * p, N * p))
    for i in range(1, N + 1):
        Hi = sys.H[i - 1]
        C = P[i]  # cov(x_i, x_j), advanced as C <- C F_{j-1}^T
        for j in range(i, N + 1):
            if j > i:
                C = C @ sys.F[j - 1].T
            block = Hi @ C @ sys.H[j - 1].T
            if j == i:
                block = block + sys.R[i - 1]
            out[(i - 1) * p:i * p, (j - 1) * p:j * p] = block
            out[(j - 1) * p:j * p, (i - 1) * p:i * p] = block.T
    return out


def build_joint(sys: LinearSystem) -> GaussianJoint:
    """Validated ``GaussianJoint`` of the stacked measurements."""
    return GaussianJoint(joint_mean(sys), joint_cov(sys), sys.obs_dim)


def simulate(sys: LinearSystem, rng, size=1, R_scale=1.0, P0_scale=1.0, u=None):
    """
    Sample state trajectories and measurements.

    Parameters
    ----------
    rng : numpy.random.Generator
    size : int
        Number of independent trajectories.
    R_scale, P0_scale : float
        Multipliers applied to the measurement and prior covariances of the
        truth, leaving the model untouched.
    u : array_like, optional
        Controls to apply instead of ``sys.u``.

    Returns
    -------
    X : ndarray, shape (size, N+1, n)
    Y : ndarray, shape (size, N, p)
    """
    N, n, p = sys.horizon, sys.state_dim, sys.obs_dim
    controls = sys.u if u is None else _per_step(u, N, "u", ndim=1)
    X = np.empty((size, N + 1, n))
    Y = np.empty((size, N, p))
    X[:, 0] = sys.mu0 + rng.standard_normal((size, n)) @ psd_sqrt(P0_scale * sys.P0).T
    for k in range(N):
        x = X[:, k] @ sys.F[k].T + sys.G[k] @ controls[k]
        q = sys.Q.shape[1]
        if q:
            w = rng.standard_normal((size, q)) @ psd_sqrt(sys.Q[k]).T
            x = x + w @ sys.Gamma[k].T
        X[:, k + 1] = x
        v = rng.standard_normal((size, p)) @ psd_sqrt(R_scale * sys.R[k]).T
        Y[:, k] = x @ sys.H[k].T + v
    return X, Y
