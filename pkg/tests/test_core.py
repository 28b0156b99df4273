import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from surprise_index import (
    DimensionError,
    GaussianJoint,
    NotPositiveDefiniteError,
    chi2_sf,
    cumulative_si,
    mahalanobis_epsilon,
    marginalize,
    surprise_index,
)
from surprise_index.core import prefix_epsilons

from conftest import random_spd


def scalar(mu=0.0, var=1.0):
    return GaussianJoint(np.array([mu]), np.array([[var]]))


# --- mahalanobis_epsilon ---------------------------------------------------

def test_epsilon_examples():
    assert mahalanobis_epsilon(scalar(), [0.0]) == 0.0
    assert mahalanobis_epsilon(scalar(), [2.0]) == pytest.approx(4.0, rel=1e-15)
    j = GaussianJoint(np.array([1.0, 1.0]), 2 * np.eye(2))
    assert mahalanobis_epsilon(j, [3.0, 1.0]) == pytest.approx(2.0, rel=1e-15)


def test_epsilon_matches_explicit_inverse(rng):
    for n in (1, 2, 5, 9):
        S = random_spd(rng, n)
        mu, y = rng.standard_normal(n), rng.standard_normal(n)
        r = y - mu
        assert mahalanobis_epsilon(GaussianJoint(mu, S), y) == pytest.approx(r @ np.linalg.inv(S) @ r, rel=1e-10)


def test_epsilon_dimension_mismatch():
    with pytest.raises(DimensionError):
        mahalanobis_epsilon(scalar(), [1.0, 2.0])


# --- GaussianJoint invariants -------------------------------------------------

def test_joint_rejects_bad_covariances():
    with pytest.raises(DimensionError):
        GaussianJoint(np.zeros(2), np.eye(3))
    with pytest.raises(ValueError, match="symmetric"):
        GaussianJoint(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        GaussianJoint(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DimensionError):
        GaussianJoint(np.zeros(3), np.eye(3), block_dim=2)


def test_joint_symmetrizes_round_off():
    S = np.array([[2.0, 1.0], [1.0 + 1e-12, 2.0]])
    j = GaussianJoint(np.zeros(2), S)
    assert np.array_equal(j.cov, j.cov.T)
    assert j.jitter == 0.0


def test_joint_jitter_rescues_singular_psd():
    v = np.array([1.0, 2.0, 3.0])
    j = GaussianJoint(np.zeros(3), np.outer(v, v) + np.diag([1e-20, 0, 0]))
    assert j.jitter == pytest.approx(1e-10 * 14 / 3)
    assert np.all(np.isfinite(j.chol))


def test_joint_is_immutable():
    j = GaussianJoint(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        j.cov[0, 0] = 5.0
    with pytest.raises(AttributeError):
        j.mean = np.ones(2)


def test_joint_blocks():
    S = np.arange(16.0).reshape(4, 4)
    S = S @ S.T + np.eye(4)
    j = GaussianJoint(np.arange(4.0), S, block_dim=2)
    assert j.steps == 2 and j.dim == 4
    np.testing.assert_array_equal(j.block(2, 1), S[2:, :2])


# --- surprise_index -----------------------------------------------------------

def test_si_examples():
    assert surprise_index(scalar(), [0.0]) == 1.0
    assert surprise_index(scalar(), [1e6]) == pytest.approx(0.0, abs=1e-300)
    assert surprise_index(scalar(), [1.0]) == pytest.approx(math.erfc(1 / math.sqrt(2)), abs=1e-12)
    assert surprise_index(scalar(), [1.0]) == pytest.approx(0.3173, abs=1e-4)


def test_si_at_mean_is_exactly_one(rng):
    S = random_spd(rng, 6)
    mu = rng.standard_normal(6)
    assert surprise_index(GaussianJoint(mu, S), mu) == 1.0


@st.composite
def joints(draw, max_dim=6):
    n = draw(st.integers(1, max_dim))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    scale = draw(st.floats(1e-3, 1e3))
    return GaussianJoint(rng.standard_normal(n) * scale, scale**2 * random_spd(rng, n)), rng


@settings(max_examples=100, deadline=None)
@given(joints(), st.floats(0.0, 10.0))
def test_si_range(jr, spread):
    joint, rng = jr
    y = joint.mean + spread * rng.standard_normal(joint.dim) * np.sqrt(np.diag(joint.cov))
    assert 0.0 <= surprise_index(joint, y) <= 1.0


@settings(max_examples=100, deadline=None)
@given(joints(), st.floats(0.05, 5.0), st.floats(1.05, 3.0))
def test_si_monotone_in_epsilon(jr, r, factor):
    joint, rng = jr
    d = joint.chol @ rng.standard_normal(joint.dim)
    e1 = mahalanobis_epsilon(joint, joint.mean + r * d)
    e2 = mahalanobis_epsilon(joint, joint.mean + r * factor * d)
    assume(chi2_sf(joint.dim, e2) > 1e-300)
    assert e1 < e2
    assert surprise_index(joint, joint.mean + r * d) > surprise_index(joint, joint.mean + r * factor * d)


@settings(max_examples=100, deadline=None)
@given(joints())
def test_si_level_sets(jr):
    # two directions scaled to the same epsilon give the same SI
    joint, rng = jr
    a, b = rng.standard_normal((2, joint.dim))
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    r = rng.uniform(0.1, 4.0)
    y1 = joint.mean + r * (joint.chol @ a)
    y2 = joint.mean + r * (joint.chol @ b)
    assert surprise_index(joint, y1) == pytest.approx(surprise_index(joint, y2), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(joints(max_dim=5))
def test_si_affine_invariance(jr):
    joint, rng = jr
    n = joint.dim
    A = random_spd(rng, n, cond=5.0) @ np.linalg.qr(rng.standard_normal((n, n)))[0]
    b = rng.standard_normal(n)
    y = joint.mean + joint.chol @ rng.standard_normal(n)
    pushed = GaussianJoint(A @ joint.mean + b, A @ joint.cov @ A.T)
    assert surprise_index(pushed, A @ y + b) == pytest.approx(surprise_index(joint, y), abs=1e-10)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_probability_integral_transform(rng, n):
    joint = GaussianJoint(rng.standard_normal(n), random_spd(rng, n))
    Y = joint.sample(2000, rng)
    si = np.array([surprise_index(joint, y) for y in Y])
    assert stats.kstest(si, "uniform").pvalue > 1e-3
    assert abs(si.mean() - 0.5) < 0.05


# --- cumulative_si ----------------------------------------------------------------

def test_cumulative_examples():
    j = scalar(2.0, 3.0)
    tr = cumulative_si(j, [4.0])
    assert len(tr) == 1 and tr.final == surprise_index(j, [4.0])

    iid = GaussianJoint(np.zeros(3), np.eye(3))
    tr = cumulative_si(iid, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(tr.si, [chi2_sf(1, 1), chi2_sf(2, 2), chi2_sf(3, 3)], rtol=1e-13)
    np.testing.assert_array_equal(tr.dof, [1, 2, 3])
    np.testing.assert_array_equal(tr.steps, [1, 2, 3])

    np.testing.assert_array_equal(cumulative_si(iid, np.zeros(3)).si, np.ones(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_cumulative_prefixes_match_marginals(N, p, seed):
    rng = np.random.default_rng(seed)
    joint = GaussianJoint(rng.standard_normal(N * p), random_spd(rng, N * p), block_dim=p)
    y = joint.sample(1, rng)[0]
    tr = cumulative_si(joint, y)
    assert abs(tr.final - surprise_index(joint, y)) <= 1e-12
    for k in range(1, N + 1):
        prefix = marginalize(joint, range(1, k + 1))
        assert tr.si[k - 1] == pytest.approx(surprise_index(prefix, y[:k * p]), abs=1e-12)
        assert tr.dof[k - 1] == k * p


def test_prefix_epsilons_batch(rng):
    joint = GaussianJoint(np.zeros(6), random_spd(rng, 6), block_dim=2)
    Y = joint.sample(5, rng)
    E = prefix_epsilons(joint, Y)
    assert E.shape == (5, 3)
    for row, y in zip(E, Y):
        np.testing.assert_allclose(row, cumulative_si(joint, y).epsilon, rtol=1e-12)


# --- marginalize ---------------------------------------------------------------------

def test_marginalize_examples(rng):
    j = GaussianJoint(rng.standard_normal(6), random_spd(rng, 6), block_dim=2)
    same = marginalize(j, [1, 2, 3])
    np.testing.assert_array_equal(same.mean, j.mean)
    np.testing.assert_array_equal(same.cov, j.cov)

    iid = GaussianJoint(np.array([1.0, 2.0, 3.0, 4.0]), np.diag([1.0, 2.0, 3.0, 4.0]), block_dim=2)
    m = marginalize(iid, [2])
    np.testing.assert_array_equal(m.mean, [3.0, 4.0])
    np.testing.assert_array_equal(m.cov, np.diag([3.0, 4.0]))

    corr = GaussianJoint(np.array([5.0, 6.0]), np.array([[2.0, 1.0], [1.0, 2.0]]))
    m = marginalize(corr, [1])
    np.testing.assert_array_equal(m.mean, [5.0])
    np.testing.assert_array_equal(m.cov, [[2.0]])


def test_marginalize_keeps_step_labels():
    j = GaussianJoint(np.zeros(4), np.eye(4))
    m = marginalize(j, [2, 4])
    assert list(cumulative_si(m, [0.0, 1.0]).steps) == [2, 4]


@pytest.mark.parametrize("keep", [[], [0], [5], [2, 2], [3, 1]])
def test_marginalize_bad_indices(keep):
    with pytest.raises(ValueError):
        marginalize(GaussianJoint(np.zeros(4), np.eye(4)), keep)
