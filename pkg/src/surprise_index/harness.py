"""
Scenario simulation and Monte Carlo surprise-index studies.

A scenario pairs a model (linear or nonlinear) with a perturbed truth: the
true measurement noise is ``R_scale * R`` and the true prior covariance is
``P0_scale * P0``. Each run simulates truth and measurements, and the
cumulative SI of the measurements is evaluated against the joint built from
the unperturbed model with its nominal (pre-scheduled) controls.

Per-run generators are Philox streams spawned from
``SeedSequence(seed)``; run ``i`` always receives child ``i``, so results
do not depend on worker count or completion order.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .core import GaussianJoint, SiTrace, marginalize, prefix_epsilons
from .lgm import LinearSystem, build_joint
from .nonlinear import NonlinearModel, build_joint_nonlinear
from .oracle import RNG_ALGORITHM, make_rng
from .special import chi2_sf
from .validation import DimensionError, ModelValidationError, psd_sqrt

__all__ = [
    "ControllerSpec",
    "Scenario",
    "RunResult",
    "McSummary",
    "controller",
    "reference_trajectory",
    "subsample_steps",
    "model_joint",
    "simulate_run",
    "run_monte_carlo",
    "SEED_SPLITTING",
]

SEED_SPLITTING = "run i uses numpy.random.SeedSequence(seed).spawn(runs)[i]"
CONTROLLER_KINDS = ("none", "linear_feedback", "impulsive_dv")


@dataclass(frozen=True)
class ControllerSpec:
    """
    Stand-in feedback controller.

    kind : {"none", "linear_feedback", "impulsive_dv"}
    gain :
        ``linear_feedback``: matrix ``K`` (m x n), control ``K (x_ref - x_hat)``.
        ``impulsive_dv``: scalar ``g``; at scheduled steps the velocity
        increment is ``-g ((r_hat - r_ref) / lead_time + (v_hat - v_ref))``.
    schedule : steps at which impulses fire. If omitted, ``per_period``
        equally spaced epochs over each ``period_steps`` steps.
    lead_time : time over which a position error is to be removed; defaults
        to the interval between scheduled impulses.
    """

    kind: str = "none"
    gain: Union[float, Tuple[Tuple[float, ...], ...]] = 0.0
    schedule: Optional[Tuple[int, ...]] = None
    per_period: int = 15
    period_steps: Optional[int] = None
    lead_time: Optional[float] = None

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ValueError(f"controller kind must be one of {CONTROLLER_KINDS}, got {self.kind!r}")
        if not np.all(np.isfinite(np.asarray(self.gain, dtype=float))):
            raise ValueError("controller gain must be finite")
        if self.schedule is not None:
            object.__setattr__(self, "schedule", tuple(int(s) for s in self.schedule))

    def spacing(self, horizon):
        period = self.period_steps or horizon
        return max(1, period // self.per_period)

    def fires(self, step, horizon):
        """Whether an impulse is scheduled at ``step``."""
        if self.schedule is not None:
            return step in self.schedule
        return step % self.spacing(horizon) == 0


def controller(spec: ControllerSpec, estimate, reference, step=0, control_dim=None, dt=1.0, horizon=None):
    """
    Control correction for one step.

    Returns zeros for ``kind="none"``, for a zero gain, at zero deviation,
    and (for impulsive control) off the firing schedule.
    """
    estimate = np.asarray(estimate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    dev = estimate - reference
    if spec.kind == "none":
        return np.zeros(0 if control_dim is None else control_dim)
    if spec.kind == "linear_feedback":
        K = np.atleast_2d(np.asarray(spec.gain, dtype=float))
        if K.shape[1] != dev.shape[0]:
            raise DimensionError(f"feedback gain has {K.shape[1]} columns, state dimension is {dev.shape[0]}")
        return -K @ dev
    d = dev.shape[0] // 2
    out = np.zeros(d if control_dim is None else control_dim)
    horizon = horizon or step + 1
    if not spec.fires(step, horizon):
        return out
    lead = spec.lead_time if spec.lead_time is not None else dt * spec.spacing(horizon)
    out[:d] = -float(spec.gain) * (dev[:d] / lead + dev[d:2 * d])
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    One Monte Carlo study.

    Parameters
    ----------
    model : LinearSystem or NonlinearModel
    horizon : int, optional
        Number of measurement steps. Taken from the linear system when omitted.
    R_scale : float
        True measurement covariance is ``R_scale * R``.
    P0_scale : float
        True initial covariance is ``P0_scale * P0``.
    controller : ControllerSpec
    nominal_controls : array_like, optional
        Pre-scheduled controls, shape ``(horizon, m)`` or ``(m,)``. These
        enter the model-side joint as known inputs; for linear systems the
        system's own ``u`` is used when omitted.
    disable_control_at : int, optional
        From this step on the actuator is off: neither nominal nor feedback
        controls are applied to the truth.
    n_measurements : int, optional
        Evaluate SI on this many equally spaced steps instead of all.
    runs, seed, workers : int
    kappa : float, optional
        Sigma-point spread for nonlinear models.
    """

    model: Union[LinearSystem, NonlinearModel]
    horizon: Optional[int] = None
    R_scale: float = 1.0
    P0_scale: float = 1.0
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    nominal_controls: Optional[np.ndarray] = None
    disable_control_at: Optional[int] = None
    n_measurements: Optional[int] = None
    runs: int = 100
    seed: int = 0
    workers: int = 1
    kappa: Optional[float] = None

    def __post_init__(self):
        problems = []
        linear = isinstance(self.model, LinearSystem)
        if not linear and not isinstance(self.model, NonlinearModel):
            raise TypeError(f"model must be a LinearSystem or NonlinearModel, got {type(self.model).__name__}")
        horizon = self.horizon
        if linear:
            if horizon is None:
                horizon = self.model.horizon
            elif horizon != self.model.horizon:
                problems.append(f"horizon {horizon} differs from the linear system horizon {self.model.horizon}")
        elif horizon is None:
            problems.append("horizon is required for nonlinear models")
        if horizon is not None and horizon < 1:
            problems.append(f"horizon must be at least 1, got {horizon}")
        if not self.R_scale > 0:
            problems.append(f"R_scale must be positive, got {self.R_scale}")
        if not self.P0_scale > 0:
            problems.append(f"P0_scale must be positive, got {self.P0_scale}")
        if self.runs < 1:
            problems.append(f"runs must be at least 1, got {self.runs}")
        if self.workers < 1:
            problems.append(f"workers must be at least 1, got {self.workers}")
        if self.n_measurements is not None and horizon is not None and not 1 <= self.n_measurements <= horizon:
            problems.append(f"n_measurements must lie in [1, {horizon}], got {self.n_measurements}")
        if problems:
            raise ModelValidationError(problems)
        object.__setattr__(self, "horizon", int(horizon))
        m = self.model.control_dim
        if self.nominal_controls is None:
            u = np.array(self.model.u) if linear else np.zeros((self.horizon, m))
        else:
            u = np.asarray(self.nominal_controls, dtype=float)
            if u.ndim == 1:
                u = np.broadcast_to(u, (self.horizon, u.shape[0]))
            if u.shape != (self.horizon, m):
                raise DimensionError(f"nominal_controls must have shape ({self.horizon}, {m}), got {u.shape}")
            u = np.array(u)
        u.setflags(write=False)
        object.__setattr__(self, "nominal_controls", u)

    @property
    def linear(self):
        return isinstance(self.model, LinearSystem)

    def replace(self, **changes):
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return Scenario(**kw)


class RunResult(NamedTuple):
    truth: np.ndarray          # (N+1, n)
    measurements: np.ndarray   # (N, p)
    controls: np.ndarray       # (N, m)


def _linear_system(scn):
    sys = scn.model
    if np.array_equal(sys.u, scn.nominal_controls):
        return sys
    return sys.with_controls(scn.nominal_controls)


def model_joint(scn: Scenario) -> GaussianJoint:
    """Model-side joint of all ``horizon`` measurements under nominal controls."""
    if scn.linear:
        return build_joint(_linear_system(scn))
    return build_joint_nonlinear(scn.model, scn.horizon, scn.nominal_controls, scn.kappa)


def reference_trajectory(scn: Scenario) -> np.ndarray:
    """Noise-free trajectory from the prior mean under nominal controls, ``(N+1, n)``."""
    if not scn.linear:
        return scn.model.nominal_trajectory(scn.horizon, scn.nominal_controls)
    sys = scn.model
    out = np.empty((scn.horizon + 1, sys.state_dim))
    out[0] = sys.mu0
    for k in range(scn.horizon):
        out[k + 1] = sys.F[k] @ out[k] + sys.G[k] @ scn.nominal_controls[k]
    return out


def subsample_steps(horizon, count=None):
    """``count`` equally spaced 1-based steps from 1 to ``horizon`` (all steps if None)."""
    if count is None or count >= horizon:
        return list(range(1, horizon + 1))
    return sorted(set(int(round(s)) for s in np.linspace(1, horizon, count)))


def _H(scn, k):
    # measurement matrix used at step k (k >= 1); step 0 reuses step 1's
    if scn.linear:
        return scn.model.H[max(k, 1) - 1]
    return scn.model.H


def _R(scn, k):
    if scn.linear:
        return scn.model.R[max(k, 1) - 1]
    return scn.model.R


class _TruthFactors(NamedTuple):
    P0_sqrt: np.ndarray
    R_sqrt: List[np.ndarray]     # index k = 0..N
    H_pinv: List[np.ndarray]     # index k = 0..N-1
    Q_sqrt: List[np.ndarray]     # index k = 0..N-1, linear only


def _truth_factors(scn):
    model = scn.model
    N = scn.horizon
    P0_sqrt = psd_sqrt(scn.P0_scale * model.P0)
    R_sqrt = [psd_sqrt(scn.R_scale * _R(scn, k)) for k in range(N + 1)]
    H_pinv = [np.linalg.pinv(_H(scn, k)) for k in range(N)]
    Q_sqrt = [psd_sqrt(model.Q[k]) for k in range(N)] if scn.linear and model.Q.shape[1] else []
    return _TruthFactors(P0_sqrt, R_sqrt, H_pinv, Q_sqrt)


def simulate_run(scn: Scenario, seed, reference=None, _factors=None) -> RunResult:
    """
    One truth trajectory with its measurements ``y_1..y_N``.

    The initial state is drawn from ``N(mu0, P0_scale * P0)``; an extra
    measurement ``y_0`` feeds the controller only. State estimates given to
    the controller are least-squares inversions of the latest measurement.
    """
    if reference is None:
        reference = reference_trajectory(scn)
    fac = _truth_factors(scn) if _factors is None else _factors
    rng = make_rng(seed)
    model = scn.model
    N = scn.horizon
    n, p = model.state_dim, model.obs_dim
    m = model.control_dim
    X = np.empty((N + 1, n))
    Y = np.empty((N, p))
    U = np.zeros((N, m))
    X[0] = model.mu0 + fac.P0_sqrt @ rng.standard_normal(n)

    def measure(x, k):
        return _H(scn, k) @ x + fac.R_sqrt[k] @ rng.standard_normal(p)

    y = measure(X[0], 0)
    dt = 1.0 if scn.linear else model.dt
    for k in range(N):
        if scn.disable_control_at is not None and k >= scn.disable_control_at:
            u = np.zeros(m)
        else:
            u = np.array(scn.nominal_controls[k])
            if scn.controller.kind != "none":
                est = fac.H_pinv[k] @ y
                u = u + controller(scn.controller, est, reference[k], k, m, dt, N)
        U[k] = u
        if scn.linear:
            x = model.F[k] @ X[k] + model.G[k] @ u
            if fac.Q_sqrt:
                x = x + model.Gamma[k] @ (fac.Q_sqrt[k] @ rng.standard_normal(fac.Q_sqrt[k].shape[0]))
        else:
            x = model.step(X[k], u, k)
        if not np.all(np.isfinite(x)):
            raise ArithmeticError(f"non-finite truth state at step {k + 1}")
        X[k + 1] = x
        y = measure(x, k + 1)
        Y[k] = y
    return RunResult(X, Y, U)


@dataclass(frozen=True, eq=False)
class McSummary:
    """
    Cumulative-SI statistics across runs.

    ``si`` and ``epsilon`` have shape ``(runs, K)`` for the ``K`` evaluated
    steps. With a single run the standard deviation is reported as 0.
    """

    steps: np.ndarray
    dof: np.ndarray
    epsilon: np.ndarray
    si: np.ndarray
    jitter: float = 0.0

    @property
    def runs(self):
        return self.si.shape[0]

    @property
    def mean(self):
        return self.si.mean(axis=0)

    @property
    def std(self):
        if self.runs < 2:
            return np.zeros(self.si.shape[1])
        return self.si.std(axis=0, ddof=1)

    def envelope(self, n_sigma=1):
        """``(lower, upper)`` = mean -/+ ``n_sigma`` standard deviations."""
        return self.mean - n_sigma * self.std, self.mean + n_sigma * self.std

    def quantile(self, q):
        return np.quantile(self.si, q, axis=0)

    @property
    def final_si(self):
        return self.si[:, -1]

    @property
    def traces(self) -> List[SiTrace]:
        return [SiTrace(self.steps, e, self.dof, s) for e, s in zip(self.epsilon, self.si)]


def _run_many(scn, seeds, reference):
    fac = _truth_factors(scn)
    if scn.workers == 1 or len(seeds) == 1:
        return [simulate_run(scn, s, reference, fac) for s in seeds]
    with ThreadPoolExecutor(max_workers=scn.workers) as pool:
        return list(pool.map(lambda s: simulate_run(scn, s, reference, fac), seeds))


def run_monte_carlo(scn: Scenario, joint: Optional[GaussianJoint] = None) -> McSummary:
    """
    Simulate ``scn.runs`` independent runs and evaluate cumulative SI.

    Parameters
    ----------
    joint : GaussianJoint, optional
        Precomputed model joint over all ``horizon`` steps (reused across a
        sweep of truth perturbations).
    """
    if joint is None:
        joint = model_joint(scn)
    keep = subsample_steps(scn.horizon, scn.n_measurements)
    evaluated = joint if len(keep) == joint.steps else marginalize(joint, keep)
    seeds = np.random.SeedSequence(scn.seed).spawn(scn.runs)
    results = _run_many(scn, seeds, reference_trajectory(scn))
    p = joint.block_dim
    Y = np.stack([r.measurements[np.asarray(keep) - 1].reshape(-1) for r in results])
    eps = prefix_epsilons(evaluated, Y)
    dof = p * np.arange(1, len(keep) + 1)
    si = np.empty_like(eps)
    for (i, k), e in np.ndenumerate(eps):
        si[i, k] = 1.0 if e == 0.0 else chi2_sf(int(dof[k]), float(e))
    return McSummary(np.asarray(keep), dof, eps, si, max(joint.jitter, evaluated.jitter))


def rng_metadata():
    return {"rng_algorithm": RNG_ALGORITHM, "seed_splitting": SEED_SPLITTING}
