import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from bfem.exceptions import EmptyCluster, SingularScatter
from bfem.fisher import (
    ScatterSet,
    fisher_criterion,
    fstep_odv,
    fstep_odv_explicit,
    fstep_svd,
    scatter_set,
    soft_between_scatter,
    svd_reconstruction_error,
    total_scatter,
)


def _scatters(seed, n=120, p=None, K=None):
    rng = np.random.default_rng(seed)
    p = p or int(rng.integers(3, 30))
    K = K or int(rng.integers(2, 6))
    Y = rng.standard_normal((n, p)) * rng.uniform(0.3, 3.0, p)
    Y[:, 0] += 3 * rng.integers(0, K, n)
    tau = rng.dirichlet(np.ones(K) * 0.3, size=n)
    return Y, tau, scatter_set(total_scatter(Y), Y, tau), K


def test_between_scatter_dense():
    Y, tau, sc, K = _scatters(0)
    n = Y.shape[0]
    ybar = Y.mean(0)
    dense = np.zeros((Y.shape[1],) * 2)
    for k in range(K):
        nk = tau[:, k].sum()
        mk = tau[:, k] @ Y / nk
        dense += nk / n * np.outer(mk - ybar, mk - ybar)
    np.testing.assert_allclose(sc.S_B, dense, atol=1e-12)
    np.testing.assert_allclose(sc.between_factor @ sc.between_factor.T, dense, atol=1e-12)


def test_total_scatter_decomposition():
    # S_T = S_W + S_B for hard partitions
    rng = np.random.default_rng(1)
    Y = rng.standard_normal((50, 4))
    labels = np.arange(50) % 3
    tau = np.eye(3)[labels]
    ts = total_scatter(Y)
    S_B, means, _ = soft_between_scatter(Y, tau)
    S_W = sum((Y[labels == k] - means[k]).T @ (Y[labels == k] - means[k]) for k in range(3)) / 50
    np.testing.assert_allclose(ts.S_T, S_W + S_B, atol=1e-12)


def test_singular_scatter():
    with pytest.raises(SingularScatter):
        total_scatter(np.ones((10, 3)))


def test_ill_conditioned_scatter_is_ridged():
    rng = np.random.default_rng(2)
    Y = rng.standard_normal((5, 20))
    ts = total_scatter(Y)
    assert ts.regularized
    assert np.all(np.isfinite(ts.S_T_inv))


def test_empty_cluster_in_scatter():
    Y = np.random.default_rng(0).standard_normal((10, 3))
    tau = np.zeros((10, 2))
    tau[:, 0] = 1
    with pytest.raises(EmptyCluster):
        soft_between_scatter(Y, tau)


@pytest.mark.parametrize("seed", range(5))
def test_odv_first_direction_is_generalized_eigvec(seed):
    _, _, sc, K = _scatters(seed)
    U = fstep_odv(sc, 1).U
    w, V = sla.eigh(sc.S_B, sc.S_T_work)
    v = V[:, -1] / np.linalg.norm(V[:, -1])
    assert abs(abs(v @ U[:, 0]) - 1) < 1e-8
    num = U[:, 0] @ sc.S_B @ U[:, 0]
    den = U[:, 0] @ sc.S_T_work @ U[:, 0]
    assert num / den == pytest.approx(w[-1], rel=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_odv_matches_explicit_complement(seed):
    _, _, sc, K = _scatters(seed)
    d = K - 1
    np.testing.assert_allclose(fstep_odv(sc, d).U, fstep_odv_explicit(sc, d), atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_odv_directions_maximize_in_complement(seed):
    # each later direction beats random feasible directions in the Fisher ratio
    rng = np.random.default_rng(100 + seed)
    _, _, sc, K = _scatters(seed, K=4)
    res = fstep_odv(sc, 3)
    U = res.U
    for r in range(1, 3):
        prev = U[:, :r]
        u = U[:, r]
        best = (u @ sc.S_B @ u) / (u @ sc.S_T_work @ u)
        for _ in range(200):
            v = rng.standard_normal(U.shape[0])
            v -= prev @ (prev.T @ v)
            assert (v @ sc.S_B @ v) / (v @ sc.S_T_work @ v) <= best + 1e-10
    assert np.all(np.diff(res.fisher_values) <= 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_svd_matches_dense(seed):
    _, _, sc, K = _scatters(seed)
    d = K - 1
    A = sc.S_T_inv @ sc.S_B
    W = np.linalg.svd(A)[0][:, :d]
    U = fstep_svd(sc, d).U
    # same subspace
    np.testing.assert_allclose(U @ U.T, W @ W.T, atol=1e-7)
    assert svd_reconstruction_error(U, sc.S_T_inv, sc.S_B) == pytest.approx(
        svd_reconstruction_error(W, sc.S_T_inv, sc.S_B), abs=1e-8)


def test_svd_rank_deficiency_flag():
    # S_B has rank K - 1 = 1, so only one singular direction exists
    _, _, sc, K = _scatters(3, p=10, K=2)
    res = fstep_svd(sc, 3)
    assert res.rank_deficient
    np.testing.assert_allclose(res.U.T @ res.U, np.eye(3), atol=1e-10)


def test_odv_goes_beyond_rank_of_between_scatter():
    # u_1 = S_T^{-1} m is not parallel to m, so its complement still discriminates
    _, _, sc, K = _scatters(3, p=10, K=2)
    res = fstep_odv(sc, 3)
    assert not res.rank_deficient
    assert np.all(res.fisher_values > 0)


def test_odv_rank_deficiency_flag():
    # with S_T = I the first direction is the mean difference itself
    p = 6
    m = np.arange(1.0, p + 1)[:, None]
    sc = ScatterSet(np.eye(p), np.eye(p), m @ m.T, None, np.zeros(p), m, np.eye(p))
    res = fstep_odv(sc, 3)
    assert res.rank_deficient
    assert abs(res.U[:, 0] @ m[:, 0]) == pytest.approx(np.linalg.norm(m))
    np.testing.assert_allclose(res.U.T @ res.U, np.eye(3), atol=1e-10)


def test_fisher_criterion_of_generalized_eigvecs():
    _, _, sc, K = _scatters(4, K=3)
    w, V = sla.eigh(sc.S_B, sc.S_T_work)
    Q = np.linalg.qr(V[:, -2:])[0]
    assert fisher_criterion(Q, sc.S_T_work, sc.S_B) == pytest.approx(w[-2:].sum(), rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), method=st.sampled_from(["odv", "svd"]))
def test_orthonormal_output(seed, method):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 6))
    p = int(rng.integers(K, 25))
    _, _, sc, _ = _scatters(seed, n=int(rng.integers(K + 2, 80)), p=p, K=K)
    solver = fstep_odv if method == "odv" else fstep_svd
    U = solver(sc, int(rng.integers(1, K))).U
    assert np.linalg.norm(U.T @ U - np.eye(U.shape[1])) < 1e-10
