"""
Ready-made models: a static 2-D GPS platform, an undamped Duffing
oscillator, and the circular restricted three-body problem.
"""
import numpy as np
from scipy import optimize

from .lgm import LinearSystem
from .nonlinear import NonlinearModel

__all__ = [
    "GM_SUN",
    "GM_EARTH",
    "GM_MOON",
    "SUN_EARTH_MASS_RATIO",
    "EARTH_MOON_MASS_RATIO",
    "GPS_MU0",
    "GPS_SIGMA0",
    "GPS_R",
    "gps_system",
    "static_platform",
    "duffing_dynamics",
    "duffing_energy",
    "duffing_model",
    "cr3bp_dynamics",
    "cr3bp_model",
    "lagrange_point",
]

# gravitational parameters, m^3/s^2 (IAU 2009 / DE430 values)
GM_SUN = 1.32712440018e20
GM_EARTH = 3.986004418e14
GM_MOON = 4.902800066e12

# Earth alone as the secondary, not the Earth-Moon barycentre
SUN_EARTH_MASS_RATIO = GM_EARTH / (GM_SUN + GM_EARTH)
EARTH_MOON_MASS_RATIO = GM_MOON / (GM_EARTH + GM_MOON)

GPS_MU0 = np.array([0.0, 0.0])
GPS_SIGMA0 = np.array([[1.0, 0.2], [0.2, 0.8]])
GPS_R = np.array([[0.6, 0.0], [0.0, 0.9]])


def gps_system(horizon, mu0=GPS_MU0, Sigma0=GPS_SIGMA0, R=GPS_R):
    """
    Stationary platform seen by a position sensor: ``y_k = x + v_k``.

    Every measurement shares the unknown position ``x ~ N(mu0, Sigma0)``,
    so the joint has ``R + Sigma0`` on the diagonal and ``Sigma0`` off it.
    """
    n = len(mu0)
    return LinearSystem(F=np.eye(n), H=np.eye(n), R=R, mu0=mu0, P0=Sigma0, horizon=horizon)


def _frozen(x, u, t):
    return np.zeros_like(x)


def static_platform(mu0=GPS_MU0, Sigma0=GPS_SIGMA0, R=GPS_R, dt=1.0):
    """The GPS platform as a nonlinear model with ``f = 0``."""
    return NonlinearModel(_frozen, mu0, Sigma0, R, dt, substeps=1, name="static")


def duffing_dynamics(x, u, t):
    """``x'' = -x - x^3 + u`` with state ``(position, velocity)``."""
    pos = x[..., 0]
    vel = x[..., 1]
    force = u[0] if np.size(u) else 0.0
    return np.stack([vel, -pos - pos**3 + force], axis=-1)


def duffing_energy(x):
    """Conserved energy of the unforced oscillator."""
    pos = x[..., 0]
    vel = x[..., 1]
    return 0.5 * vel**2 + 0.5 * pos**2 + 0.25 * pos**4


def duffing_model(mu0=(1.0, 0.0), P0=None, R=None, dt=0.1, substeps=10):
    """
    Undamped, unit-stiffness Duffing oscillator with a scalar force input.

    Defaults: ``P0 = 1e-4 I``, ``R = 0.05^2 I``, full-state measurements.
    ``substeps=10`` keeps the one-step RK4 energy error below 1e-9 for
    amplitudes up to about 1.5.
    """
    P0 = 1e-4 * np.eye(2) if P0 is None else P0
    R = 0.05**2 * np.eye(2) if R is None else R
    return NonlinearModel(duffing_dynamics, mu0, P0, R, dt, substeps=substeps,
                          control_dim=1, name="duffing")


def cr3bp_dynamics(mass_ratio, spatial=True):
    """
    Equations of motion in the rotating, nondimensional frame.

    State is ``(x, y, z, vx, vy, vz)``, or ``(x, y, vx, vy)`` when planar.
    The larger primary sits at ``(-mass_ratio, 0, 0)`` and the smaller at
    ``(1 - mass_ratio, 0, 0)``.
    """
    mu = float(mass_ratio)

    def f(s, u, t):
        if spatial:
            x, y, z, vx, vy, vz = np.moveaxis(s, -1, 0)
        else:
            x, y, vx, vy = np.moveaxis(s, -1, 0)
            z = np.zeros_like(x)
        r1 = np.sqrt((x + mu) ** 2 + y**2 + z**2)
        r2 = np.sqrt((x - 1.0 + mu) ** 2 + y**2 + z**2)
        c1 = (1.0 - mu) / r1**3
        c2 = mu / r2**3
        ax = 2.0 * vy + x - c1 * (x + mu) - c2 * (x - 1.0 + mu)
        ay = -2.0 * vx + y - c1 * y - c2 * y
        if spatial:
            az = -c1 * z - c2 * z
            return np.stack([vx, vy, vz, ax, ay, az], axis=-1)
        return np.stack([vx, vy, ax, ay], axis=-1)

    return f


def lagrange_point(mass_ratio, which=1):
    """x coordinate of the collinear libration point L1, L2 or L3."""
    mu = float(mass_ratio)

    def dU(x):
        r1 = x + mu
        r2 = x - 1.0 + mu
        return x - (1.0 - mu) * r1 / abs(r1) ** 3 - mu * r2 / abs(r2) ** 3

    eps = 1e-12
    brackets = {1: (-mu + eps, 1.0 - mu - eps), 2: (1.0 - mu + eps, 2.0), 3: (-2.0, -mu - eps)}
    lo, hi = brackets[which]
    return optimize.brentq(dU, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def cr3bp_model(mass_ratio=EARTH_MOON_MASS_RATIO, mu0=None, P0=None, R=None, dt=0.02,
                substeps=20, spatial=True):
    """
    CR3BP model with impulsive velocity controls.

    The default initial state is a placeholder: the L1 point displaced by
    1e-3 along x (and z when spatial), at rest in the rotating frame. It is
    not a periodic orbit. Defaults ``P0 = 1e-10 I`` and ``R = 1e-8 I`` are
    likewise placeholders in nondimensional units.
    """
    d = 3 if spatial else 2
    n = 2 * d
    if mu0 is None:
        mu0 = np.zeros(n)
        mu0[0] = lagrange_point(mass_ratio, 1) + 1e-3
        if spatial:
            mu0[2] = 1e-3
    P0 = 1e-10 * np.eye(n) if P0 is None else P0
    R = 1e-8 * np.eye(n) if R is None else R
    B = np.vstack([np.zeros((d, d)), np.eye(d)])
    return NonlinearModel(cr3bp_dynamics(mass_ratio, spatial), mu0, P0, R, dt, substeps=substeps,
                          control_dim=d, impulse_matrix=B, name="cr3bp")
