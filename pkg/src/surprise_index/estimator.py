"""
scikit-learn style front end.

``SurpriseIndex`` fits a Gaussian reference for stacked observation
sequences (from a model, a precomputed joint, or sample data) and scores
new sequences by their surprise index. Low SI means surprising, so the
estimator also behaves like an outlier detector: ``predict`` returns -1 for
sequences whose SI falls below ``threshold``.
"""
import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import GaussianJoint, marginalize, prefix_epsilons
from .lgm import LinearSystem, build_joint
from .nonlinear import NonlinearModel, build_joint_nonlinear
from .special import chi2_sf
from .validation import DimensionError

__all__ = ["SurpriseIndex", "check_observations"]


def check_observations(X, dim, block_dim):
    """
    Coerce observations to shape ``(n_samples, dim)``.

    Accepts stacked rows ``(n_samples, N*p)`` or per-step arrays
    ``(n_samples, N, p)``.
    """
    X = check_array(X, allow_nd=True, ensure_2d=True, dtype=np.float64)
    if X.ndim == 3:
        if X.shape[2] != block_dim:
            raise DimensionError(f"observations have block size {X.shape[2]}, expected {block_dim}")
        X = X.reshape(X.shape[0], -1)
    elif X.ndim != 2:
        raise DimensionError(f"observations must be 2-d or 3-d, got {X.ndim}-d")
    if X.shape[1] != dim:
        raise DimensionError(f"observations have {X.shape[1]} features, expected {dim}")
    return X


def _sf(eps, dof):
    out = np.empty_like(eps)
    for idx, e in np.ndenumerate(eps):
        d = dof if np.ndim(dof) == 0 else dof[idx[-1]]
        out[idx] = 1.0 if e == 0.0 else chi2_sf(int(d), float(e))
    return out


class SurpriseIndex(TransformerMixin, OutlierMixin, BaseEstimator):
    """
    Surprise index scorer for jointly Gaussian observation sequences.

    Parameters
    ----------
    model : GaussianJoint, LinearSystem, NonlinearModel or None
        Source of the reference distribution. With ``None`` the mean and
        covariance are estimated from the rows passed to ``fit``.
    horizon : int, optional
        Steps to propagate a ``NonlinearModel``.
    controls : array_like, optional
        Known control inputs for a ``NonlinearModel``.
    keep_steps : sequence of int, optional
        1-based steps to retain (e.g. an equally spaced subsample).
    block_dim : int
        Per-step observation size, used only when fitting from data.
    kappa : float, optional
        Sigma-point spread for a ``NonlinearModel``.
    threshold : float
        SI below which ``predict`` flags a sequence as surprising.

    Attributes
    ----------
    joint_ : GaussianJoint
    n_features_in_ : int
    n_steps_ : int
    """

    def __init__(self, model=None, horizon=None, controls=None, keep_steps=None,
                 block_dim=1, kappa=None, threshold=0.05):
        self.model = model
        self.horizon = horizon
        self.controls = controls
        self.keep_steps = keep_steps
        self.block_dim = block_dim
        self.kappa = kappa
        self.threshold = threshold

    def fit(self, X=None, y=None):
        model = self.model
        if isinstance(model, GaussianJoint):
            joint = model
        elif isinstance(model, LinearSystem):
            joint = build_joint(model)
        elif isinstance(model, NonlinearModel):
            if self.horizon is None:
                raise ValueError("horizon is required to fit a NonlinearModel")
            joint = build_joint_nonlinear(model, int(self.horizon), self.controls, self.kappa)
        elif model is None:
            if X is None:
                raise ValueError("fit needs either a model or sample sequences X")
            X = check_array(X, allow_nd=True, dtype=np.float64)
            if X.ndim == 3:
                X = X.reshape(X.shape[0], -1)
            if X.shape[0] < 2:
                raise ValueError("at least two sample sequences are needed to estimate a covariance")
            joint = GaussianJoint(X.mean(axis=0), np.atleast_2d(np.cov(X, rowvar=False)), self.block_dim)
        else:
            raise TypeError(f"unsupported model type {type(model).__name__}")
        if self.keep_steps is not None:
            joint = marginalize(joint, self.keep_steps)
        self.joint_ = joint
        self.n_features_in_ = joint.dim
        self.n_steps_ = joint.steps
        return self

    def _validated(self, X):
        check_is_fitted(self, "joint_")
        return check_observations(X, self.joint_.dim, self.joint_.block_dim)

    def mahalanobis(self, X):
        """Chi-square statistic of each full sequence."""
        X = self._validated(X)
        return prefix_epsilons(self.joint_, X)[:, -1]

    def transform(self, X):
        """Cumulative SI of every prefix, shape ``(n_samples, n_steps)``."""
        X = self._validated(X)
        eps = prefix_epsilons(self.joint_, X)
        dof = self.joint_.block_dim * np.arange(1, self.joint_.steps + 1)
        return _sf(eps, dof)

    def score_samples(self, X):
        """SI of each full sequence; higher is less surprising."""
        return _sf(self.mahalanobis(X), self.joint_.dim)

    def decision_function(self, X):
        return self.score_samples(X) - self.threshold

    def predict(self, X):
        """+1 for unsurprising sequences, -1 where SI < ``threshold``."""
        return np.where(self.score_samples(X) < self.threshold, -1, 1)
