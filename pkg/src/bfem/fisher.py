"""Soft scatter matrices and the discriminative subspace update (F-step).

The between-class scatter has rank at most K - 1 and is carried around as a
factor ``M`` (p x K) with ``S_B = M M^T``.  The leading eigenvectors of
``S_T^{-1} S_B`` are then ``S_T^{-1} M w`` where ``w`` solves the small
symmetric problem ``M^T S_T^{-1} M w = gamma w``.  Both problems share their
non-zero spectrum, so nothing is lost and only K x K eigenproblems are solved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import EmptyCluster, SingularScatter

__all__ = [
    "TotalScatter",
    "ScatterSet",
    "FStepResult",
    "total_scatter",
    "soft_between_scatter",
    "scatter_set",
    "fstep_odv",
    "fstep_odv_explicit",
    "fstep_svd",
    "fisher_criterion",
    "fisher_values",
    "svd_reconstruction_error",
]


@dataclass
class TotalScatter:
    """Sample covariance of the data, computed once per dataset.

    ``S_T_work`` is the matrix the solvers actually use: ``S_T`` itself, or
    ``S_T`` plus a small ridge when it is ill-conditioned.
    """

    S_T: np.ndarray
    S_T_inv: np.ndarray
    S_T_work: np.ndarray
    grand_mean: np.ndarray
    regularized: bool = False


@dataclass
class ScatterSet:
    S_T: np.ndarray
    S_T_inv: np.ndarray
    S_B: np.ndarray
    means_soft: np.ndarray
    grand_mean: np.ndarray
    between_factor: np.ndarray
    S_T_work: np.ndarray

    @property
    def p(self) -> int:
        return self.S_T.shape[0]


@dataclass
class FStepResult:
    U: np.ndarray
    fisher_values: np.ndarray
    rank_deficient: bool = False


def total_scatter(Y: np.ndarray, eps_reg: float = 1e-8, cond_max: float = 1e10) -> TotalScatter:
    """Total scatter ``S_T = (1/n) sum (y_i - ybar)(y_i - ybar)^T`` and its inverse.

    A ridge ``eps_reg * tr(S_T) / p * I`` is added before inversion when the
    condition number exceeds ``cond_max``.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if n < 2:
        raise ValueError("total_scatter needs at least 2 observations")
    ybar = Y.mean(axis=0)
    Yc = Y - ybar
    S_T = (Yc.T @ Yc) / n
    S_T = 0.5 * (S_T + S_T.T)
    tr = np.trace(S_T)
    scale = max(np.abs(Y).max(), 1.0)
    if not np.isfinite(tr) or tr <= 1e-14 * scale**2 * p:
        raise SingularScatter("total scatter matrix is numerically zero (constant data?)")
    evals = np.linalg.eigvalsh(S_T)
    regularized = evals[0] <= evals[-1] / cond_max
    work = S_T + (eps_reg * tr / p) * np.eye(p) if regularized else S_T
    chol = sla.cho_factor(work, lower=True)
    S_T_inv = sla.cho_solve(chol, np.eye(p))
    S_T_inv = 0.5 * (S_T_inv + S_T_inv.T)
    return TotalScatter(S_T, S_T_inv, work, ybar, bool(regularized))


def soft_between_scatter(Y: np.ndarray, tau: np.ndarray, grand_mean: np.ndarray | None = None,
                         eps_count: float = 0.0):
    """Soft between-class scatter.

    Returns:
        (S_B, means_soft, factor) where ``S_B = factor @ factor.T``.
    """
    Y = np.asarray(Y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    n = Y.shape[0]
    ybar = Y.mean(axis=0) if grand_mean is None else grand_mean
    counts = tau.sum(axis=0)
    if np.any(counts < max(eps_count, 1e-300)):
        k = int(np.argmin(counts))
        raise EmptyCluster(f"cluster {k} has soft count {counts[k]:.3g}")
    means = (tau.T @ Y) / counts[:, None]
    factor = ((means - ybar) * np.sqrt(counts / n)[:, None]).T
    S_B = factor @ factor.T
    return S_B, means, factor


def scatter_set(total: TotalScatter, Y: np.ndarray, tau: np.ndarray, eps_count: float = 0.0) -> ScatterSet:
    S_B, means, factor = soft_between_scatter(Y, tau, total.grand_mean, eps_count)
    return ScatterSet(total.S_T, total.S_T_inv, S_B, means, total.grand_mean, factor, total.S_T_work)


def _factor_of(S_B: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    evals, evecs = np.linalg.eigh(0.5 * (S_B + S_B.T))
    keep = evals > tol * max(evals[-1], 0.0)
    if not np.any(keep):
        return np.zeros((S_B.shape[0], 1))
    return evecs[:, keep] * np.sqrt(evals[keep])


def _sign_fix(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _leading_generalized(S_Tr: np.ndarray, M_r: np.ndarray):
    """Leading eigenpair of ``S_Tr^{-1} M_r M_r^T`` via the small symmetric problem."""
    chol = sla.cho_factor(S_Tr, lower=True)
    B = sla.cho_solve(chol, M_r)
    G = M_r.T @ B
    evals, evecs = np.linalg.eigh(0.5 * (G + G.T))
    a = B @ evecs[:, -1]
    return float(evals[-1]), a


def _complement_basis(U_prev: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(U_prev)^perp.

    Gram-Schmidt over the canonical vectors, taking at each step the one with
    the largest residual; this is exactly a column-pivoted QR of the residual
    matrix ``I - U U^T``.
    """
    p, r = U_prev.shape
    R = np.eye(p) - U_prev @ U_prev.T
    Q, _, _ = sla.qr(R, pivoting=True, mode="economic")
    return Q[:, : p - r]


def _get_factor(scatters: ScatterSet) -> np.ndarray:
    if scatters.between_factor is not None:
        return scatters.between_factor
    return _factor_of(scatters.S_B)


def _constrained_leading(S_T_inv: np.ndarray, M: np.ndarray, C: np.ndarray):
    """Leading Fisher direction of ``S_T^{-1} M M^T`` restricted to ``C^perp``.

    The Lagrangian stationarity conditions give ``u = Pi S_T^{-1} M w`` with
    the symmetric projector form ``Pi S_T^{-1} = S_T^{-1} - S_T^{-1} C
    (C^T S_T^{-1} C)^{-1} C^T S_T^{-1}``, so no basis of the complement is
    needed.  This equals the projected problem in any orthonormal basis of
    ``C^perp``.
    """
    AM = S_T_inv @ M
    if C.shape[1] == 0:
        G = M.T @ AM
        W = AM
    else:
        AC = S_T_inv @ C
        CAC = C.T @ AC
        coef = np.linalg.solve(0.5 * (CAC + CAC.T), AC.T @ M)
        W = AM - AC @ coef
        G = M.T @ W
    evals, evecs = np.linalg.eigh(0.5 * (G + G.T))
    return float(evals[-1]), W @ evecs[:, -1]


def fstep_odv(scatters: ScatterSet, d: int, rank_tol: float = 1e-10) -> FStepResult:
    """Orthonormal discriminant vectors.

    ``u_1`` is the leading eigenvector of ``S_T^{-1} S_B``; each following
    direction maximises the 1-D Fisher ratio in the orthogonal complement of
    the previous ones.  Columns come out ordered by decreasing Fisher value.
    """
    S_T = scatters.S_T_work
    M = _get_factor(scatters)
    p = S_T.shape[0]
    if not 1 <= d <= p:
        raise ValueError(f"invalid subspace dimension d={d}")
    S_T_inv = scatters.S_T_inv
    U = np.zeros((p, d))
    gammas = np.zeros(d)
    deficient = False
    gamma_1 = None
    for r in range(d):
        gamma, u = _constrained_leading(S_T_inv, M, U[:, :r])
        # re-orthogonalise against round-off
        if r:
            u = u - U[:, :r] @ (U[:, :r].T @ u)
        if gamma_1 is None:
            gamma_1 = gamma
        norm = np.linalg.norm(u)
        if gamma <= rank_tol * max(gamma_1, 1e-300) or norm == 0 or not np.isfinite(norm):
            # no discriminative direction left: pad with an arbitrary orthonormal completion
            deficient = True
            P = _complement_basis(U[:, :r]) if r else np.eye(p)
            u = P[:, 0]
            gamma = 0.0
            norm = np.linalg.norm(u)
        U[:, r] = u / norm
        gammas[r] = gamma
    U = _sign_fix(U)
    vals = fisher_values(U, S_T, scatters.S_B)
    order = np.argsort(-vals, kind="stable")
    return FStepResult(U[:, order], vals[order], deficient)


def fstep_odv_explicit(scatters: ScatterSet, d: int) -> np.ndarray:
    """Reference ODV solver building an explicit basis of each complement.

    Slow (one p x p QR per direction); kept to cross-check :func:`fstep_odv`.
    """
    S_T = scatters.S_T_work
    M = _get_factor(scatters)
    p = S_T.shape[0]
    U = np.zeros((p, d))
    for r in range(d):
        if r == 0:
            _, u = _leading_generalized(S_T, M)
        else:
            P = _complement_basis(U[:, :r])
            S_Tr = P.T @ S_T @ P
            _, a = _leading_generalized(0.5 * (S_Tr + S_Tr.T), P.T @ M)
            u = P @ a
        U[:, r] = u / np.linalg.norm(u)
    U = _sign_fix(U)
    vals = fisher_values(U, S_T, scatters.S_B)
    return U[:, np.argsort(-vals, kind="stable")]


def fstep_svd(scatters: ScatterSet, d: int, rank_tol: float = 1e-10) -> FStepResult:
    """Leading ``d`` left singular vectors of ``S_T^{-1} S_B``.

    With ``S_B = M M^T`` and ``S_T^{-1} M = Q R`` the matrix factors as
    ``Q (R M^T)``, so the SVD of the small K x p matrix ``R M^T`` suffices.
    """
    M = _get_factor(scatters)
    p = M.shape[0]
    if not 1 <= d <= p:
        raise ValueError(f"invalid subspace dimension d={d}")
    chol = sla.cho_factor(scatters.S_T_work, lower=True)
    B = sla.cho_solve(chol, M)
    Q, R = np.linalg.qr(B)
    W, s, _ = np.linalg.svd(R @ M.T, full_matrices=True)
    cols = Q @ W
    deficient = False
    if d > cols.shape[1] or s.size < d or s[d - 1] <= rank_tol * max(s[0], 1e-300):
        deficient = True
        keep = int(np.sum(s > rank_tol * max(s[0], 1e-300))) if s.size else 0
        keep = min(keep, d)
        U = np.zeros((p, d))
        U[:, :keep] = cols[:, :keep]
        if keep < d:
            P = _complement_basis(U[:, :keep]) if keep else np.eye(p)
            U[:, keep:] = P[:, : d - keep]
    else:
        U = cols[:, :d]
    U = _sign_fix(U)
    return FStepResult(U, fisher_values(U, scatters.S_T_work, scatters.S_B), deficient)


def fisher_values(U: np.ndarray, S_T: np.ndarray, S_B: np.ndarray) -> np.ndarray:
    """1-D Fisher ratios ``u^T S_B u / u^T S_T u`` of each column."""
    num = np.einsum("ij,ik,kj->j", U, S_B, U)
    den = np.einsum("ij,ik,kj->j", U, S_T, U)
    return num / den


def fisher_criterion(U: np.ndarray, S_T: np.ndarray, S_B: np.ndarray) -> float:
    return float(np.trace(np.linalg.solve(U.T @ S_T @ U, U.T @ S_B @ U)))


def svd_reconstruction_error(U: np.ndarray, S_T_inv: np.ndarray, S_B: np.ndarray) -> float:
    A = S_T_inv @ S_B
    return float(np.linalg.norm(A - U @ (U.T @ A)) ** 2)
