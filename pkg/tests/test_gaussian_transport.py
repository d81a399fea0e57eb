import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pkf import psd_linalg as la
from pkf.errors import DimensionMismatch, TooFewSamples
from pkf.gaussian_transport import fit_gaussian, gelbrich_distance, transport_map

seeds = st.integers(0, 2**32 - 1)


def rand_psd(rng, n, rank=None):
    G = rng.standard_normal((n, n if rank is None else rank))
    return G @ G.T


def test_transport_identity():
    tm = transport_map(np.eye(3), np.eye(3))
    assert np.allclose(tm.T_star, np.eye(3))
    assert np.allclose(tm.Sigma_w, 0)


def test_transport_scalar_by_hand():
    tm = transport_map(np.array([[4.0]]), np.array([[1.0]]))
    assert np.isclose(tm.T_star[0, 0], 2.0)
    assert np.isclose(tm.Sigma_w[0, 0], 0.0)


def test_transport_pushforward_rank_deficient_estimate():
    rng = np.random.default_rng(0)
    Sx = rand_psd(rng, 3)
    Sxs = rand_psd(rng, 3, rank=2)
    tm = transport_map(Sx, Sxs)
    push = tm.T_star @ Sxs @ tm.T_star.T + tm.Sigma_w
    assert np.linalg.norm(push - Sx) <= 1e-8 * np.linalg.norm(Sx)


@given(seeds, st.integers(1, 5), st.integers(0, 5))
def test_transport_pushforward_property(seed, n, r):
    rng = np.random.default_rng(seed)
    Sx = rand_psd(rng, n) + 1e-3 * np.eye(n)
    rank = min(r, n)
    Sxs = rand_psd(rng, n, rank) if rank else np.zeros((n, n))
    tm = transport_map(Sx, Sxs)
    push = tm.T_star @ Sxs @ tm.T_star.T + tm.Sigma_w
    assert np.linalg.norm(push - Sx) <= 1e-8 * (1 + np.linalg.norm(Sx)) * (1 + np.linalg.cond(Sx)) ** 0.5


@given(seeds, st.integers(1, 5))
def test_transport_matches_full_rank_form(seed, n):
    # for invertible covariances the map is Sx^{-1/2}(Sx^{1/2} Sxs Sx^{1/2})^{1/2} Sx^{-1/2}
    # evaluated with roles swapped: T = Sxs^{-1/2}(Sxs^{1/2} Sx Sxs^{1/2})^{1/2} Sxs^{-1/2}
    rng = np.random.default_rng(seed)
    Sx = rand_psd(rng, n) + 0.5 * np.eye(n)
    Sxs = rand_psd(rng, n) + 0.5 * np.eye(n)
    r = la.sqrt_psd(Sxs)
    ri = np.linalg.inv(r)
    T2 = ri @ la.sqrt_psd(r @ Sx @ r) @ ri
    tm = transport_map(Sx, Sxs)
    assert np.linalg.norm(tm.T_star - T2) <= 1e-8 * (1 + np.linalg.norm(T2))


def test_transport_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        transport_map(np.eye(2), np.eye(3))


def test_gelbrich_examples():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert gelbrich_distance(np.zeros(2), S, np.zeros(2), S) == pytest.approx(0.0, abs=1e-7)
    assert gelbrich_distance([3.0, 4.0], S, [0.0, 0.0], S) == pytest.approx(5.0, abs=1e-7)
    assert gelbrich_distance([0.0], [[4.0]], [0.0], [[9.0]]) == pytest.approx(1.0)


@given(seeds, st.integers(1, 4))
def test_gelbrich_symmetric_and_triangle(seed, n):
    rng = np.random.default_rng(seed)
    pts = [(rng.standard_normal(n), rand_psd(rng, n)) for _ in range(3)]
    d = lambda a, b: gelbrich_distance(a[0], a[1], b[0], b[1])  # noqa: E731
    assert abs(d(pts[0], pts[1]) - d(pts[1], pts[0])) <= 1e-8 * (1 + d(pts[0], pts[1]))
    assert d(pts[0], pts[2]) <= d(pts[0], pts[1]) + d(pts[1], pts[2]) + 1e-8


def test_fit_gaussian_examples():
    v = np.array([1.0, -2.0, 3.0])
    mu, S = fit_gaussian(np.tile(v, (5, 1)))
    assert np.allclose(mu, v) and np.allclose(S, 0)
    mu, S = fit_gaussian(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.allclose(mu, 0) and np.allclose(S, np.diag([1.0, 0.0]))
    with pytest.raises(TooFewSamples):
        fit_gaussian(np.ones((1, 2)))


def test_fit_gaussian_consistency():
    rng = np.random.default_rng(7)
    Sigma = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, -0.2], [0.1, -0.2, 0.5]])
    N = 10**6
    X = rng.standard_normal((N, 3)) @ np.linalg.cholesky(Sigma).T
    _, S = fit_gaussian(X)
    # standard error of a covariance entry: sqrt((S_ii S_jj + S_ij^2) / N)
    se = np.sqrt((np.outer(np.diag(Sigma), np.diag(Sigma)) + Sigma**2) / N)
    assert np.all(np.abs(S - Sigma) <= 4 * se)
