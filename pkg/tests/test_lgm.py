import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surprise_index import (
    DimensionError,
    LinearSystem,
    ModelValidationError,
    build_joint,
    joint_cov,
    joint_mean,
    stm,
)
from surprise_index.lgm import simulate
from surprise_index.models import GPS_R, GPS_SIGMA0, gps_system

from lgm_helpers import literal_cov, literal_mean, moment_z_scores, random_system, simulate_literal


def scalar_system(N, F=1.0, H=1.0, R=1.0, P0=1.0, **kw):
    return LinearSystem(F=np.reshape(F, (-1, 1, 1)) if np.ndim(F) else [[F]], H=[[H]], R=[[R]],
                        mu0=[0.0], P0=[[P0]], horizon=N, **kw)


# --- stm ------------------------------------------------------------------------

def test_stm_examples():
    F = np.array([[1.0, 0.5], [0.0, 1.0]])
    sys = LinearSystem(F=F, H=np.eye(2), R=np.eye(2), mu0=np.zeros(2), P0=np.eye(2), horizon=5)
    np.testing.assert_array_equal(stm(sys, 3, 3), np.eye(2))
    np.testing.assert_allclose(stm(sys, 0, 3), np.linalg.matrix_power(F, 3), rtol=1e-15)
    tv = scalar_system(2, F=[2.0, 3.0])
    assert stm(tv, 0, 2)[0, 0] == 6.0
    with pytest.raises(ValueError):
        stm(sys, 3, 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.data())
def test_stm_semigroup(seed, data):
    sys = random_system(np.random.default_rng(seed), N=10)
    a = data.draw(st.integers(0, 10))
    b = data.draw(st.integers(a, 10))
    c = data.draw(st.integers(b, 10))
    lhs, rhs = stm(sys, a, c), stm(sys, b, c) @ stm(sys, a, b)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(lhs))


# --- joint_mean -------------------------------------------------------------------

def test_mean_examples():
    sys = LinearSystem(F=np.eye(2), H=np.eye(2), R=np.eye(2), mu0=[1.0, -2.0], P0=np.eye(2), horizon=4)
    np.testing.assert_array_equal(joint_mean(sys), np.tile([1.0, -2.0], 4))

    acc = scalar_system(5, G=[[1.0]], u=np.ones((5, 1)))
    np.testing.assert_allclose(joint_mean(acc), [1, 2, 3, 4, 5], rtol=1e-15)

    rng = np.random.default_rng(0)
    sys = random_system(rng, m=0)
    p = sys.obs_dim
    for k in range(1, sys.horizon + 1):
        expect = sys.H[k - 1] @ stm(sys, 0, k) @ sys.mu0
        np.testing.assert_allclose(joint_mean(sys)[(k - 1) * p:k * p], expect, rtol=1e-12, atol=1e-14)


# --- joint_cov ----------------------------------------------------------------------

def test_cov_examples():
    np.testing.assert_array_equal(joint_cov(scalar_system(2)), [[2.0, 1.0], [1.0, 2.0]])

    # random walk observed without sensor noise; R is kept PD and subtracted
    r = 1e-3
    rw = scalar_system(2, P0=0.0, R=r, Gamma=[[1.0]], Q=[[1.0]])
    np.testing.assert_allclose(joint_cov(rw) - r * np.eye(2), [[1.0, 1.0], [1.0, 2.0]], atol=1e-15)


def test_cov_without_process_noise_uses_prior_only():
    sys = random_system(np.random.default_rng(1), q=0, N=6)
    C, p = joint_cov(sys), sys.obs_dim
    for i in range(1, 7):
        for j in range(1, 7):
            if i == j:
                continue
            expect = sys.H[i - 1] @ stm(sys, 0, i) @ sys.P0 @ stm(sys, 0, j).T @ sys.H[j - 1].T
            np.testing.assert_allclose(C[(i - 1) * p:i * p, (j - 1) * p:j * p], expect, rtol=1e-10, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans(), st.booleans())
def test_recursion_matches_literal_sums(seed, time_varying, noise):
    sys = random_system(np.random.default_rng(seed), time_varying=time_varying, process_noise=noise)
    C, L = joint_cov(sys), literal_cov(sys)
    assert np.linalg.norm(C - L) <= 1e-10 * np.linalg.norm(L)
    m, lm = joint_mean(sys), literal_mean(sys)
    assert np.linalg.norm(m - lm) <= 1e-10 * max(1.0, np.linalg.norm(lm))


def test_zero_noise_degeneracy():
    eps = 1e-4
    rng = np.random.default_rng(2)
    sys = LinearSystem(F=rng.standard_normal((3, 3)), H=rng.standard_normal((2, 3)), R=eps * np.eye(2),
                       mu0=np.ones(3), P0=np.zeros((3, 3)), horizon=4)
    np.testing.assert_allclose(joint_cov(sys), eps * np.eye(8), rtol=0, atol=1e-18)


# --- build_joint --------------------------------------------------------------------

def test_gps_structure():
    j = build_joint(gps_system(6))
    S0, R = np.array(GPS_SIGMA0), np.array(GPS_R)
    for i in range(1, 7):
        for k in range(1, 7):
            np.testing.assert_allclose(j.block(i, k), S0 + (R if i == k else 0), rtol=1e-15)
    assert j.block_dim == 2 and j.steps == 6


def test_single_step():
    sys = random_system(np.random.default_rng(3), N=1)
    j = build_joint(sys)
    F, G, H = sys.F[0], sys.G[0], sys.H[0]
    W = sys.Gamma[0] @ sys.Q[0] @ sys.Gamma[0].T
    np.testing.assert_allclose(j.mean, H @ (F @ sys.mu0 + G @ sys.u[0]), rtol=1e-12)
    np.testing.assert_allclose(j.cov, sys.R[0] + H @ (F @ sys.P0 @ F.T + W) @ H.T, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_joint_contract(seed):
    j = build_joint(random_system(np.random.default_rng(seed)))
    assert np.array_equal(j.cov, j.cov.T)
    assert np.all(np.linalg.eigvalsh(j.cov) > 0)
    assert j.jitter == 0.0


# --- validation ------------------------------------------------------------------------

def test_invalid_systems():
    good = dict(F=np.eye(2), H=np.eye(2), R=np.eye(2), mu0=np.zeros(2), P0=np.eye(2), horizon=3)
    with pytest.raises(ModelValidationError) as info:
        LinearSystem(**{**good, "R": np.diag([1.0, -1.0]), "P0": np.diag([1.0, -2.0])})
    text = " ".join(info.value.problems)
    assert "R" in text and "P0" in text
    with pytest.raises(DimensionError):
        LinearSystem(**{**good, "H": np.eye(3)})
    with pytest.raises(DimensionError):
        LinearSystem(**{**good, "F": np.zeros((4, 2, 2))})
    with pytest.raises(ModelValidationError):
        LinearSystem(**{**good, "Gamma": np.eye(2), "Q": -np.eye(2)})


# --- Monte Carlo consistency ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(4))
def test_literal_simulation_matches_joint(seed):
    rng = np.random.default_rng(100 + seed)
    sys = random_system(rng)
    j = build_joint(sys)
    zm, zc = moment_z_scores(simulate_literal(sys, rng, 10_000), j.mean, j.cov)
    assert np.max(np.abs(zm)) < 5 and np.max(np.abs(zc)) < 5


def test_package_simulator_matches_joint():
    rng = np.random.default_rng(9)
    sys = random_system(rng)
    j = build_joint(sys)
    _, Y = simulate(sys, rng, size=10_000)
    zm, zc = moment_z_scores(Y.reshape(10_000, -1), j.mean, j.cov)
    assert np.max(np.abs(zm)) < 5 and np.max(np.abs(zc)) < 5
