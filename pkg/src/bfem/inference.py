"""Variational EM with a Fisher step for the Bayesian discriminative latent mixture.

One outer iteration is: F-step (subspace), VE-step (fixed point over q(Z) and
q(mu)), M-step (pi, Sigma, beta), empirical Bayes (nu, lambda), then the
lower bound is recorded and Aitken's criterion decides whether to stop.

Every quantity is computed from the latent coordinates ``X = Y U`` and the
squared residual norms outside the subspace; no p x p inverse is formed.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp, xlogy

from .exceptions import (
    AllRestartsFailed,
    BFEMError,
    EmptyCluster,
    NonFinite,
)
from .fisher import FStepResult, TotalScatter, fstep_odv, fstep_svd, scatter_set, total_scatter
from .kmeans import kmeans
from .model import (
    Dims,
    Hyperparams,
    ModelParams,
    SubmodelSpec,
    VariationalState,
    enforce_constraints,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "ve_step_tau",
    "ve_step_mu",
    "ve_step",
    "elbo",
    "m_step",
    "empirical_bayes",
    "aitken_estimate",
    "aitken_converged",
    "initialize",
    "fit",
    "predict_tau",
    "predict",
    "restart_seeds",
]

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class FitConfig:
    """Settings of a fit.

    ``d`` defaults to ``K - 1``.  ``init="given"`` requires ``init_labels``
    (0-based, length n).  ``n_jobs`` defaults to the ``BFEM_THREADS``
    environment variable, else 1.
    """

    K: int = 2
    spec: SubmodelSpec = field(default_factory=lambda: SubmodelSpec.from_code("Sk_B"))
    d: int | None = None
    fstep: Literal["odv", "svd"] = "odv"
    max_iter: int = 100
    ve_max_iter: int = 3
    tol_ve: float = 1e-6
    tol_m: float = 1e-6
    restarts: int = 10
    init: Literal["kmeans", "random", "given"] = "kmeans"
    init_labels: np.ndarray | None = None
    lambda0: float = 1e3
    seed: int | None = 0
    center_data: bool = True
    empirical_bayes: bool = True
    nu0: np.ndarray | None = None
    eps_var: float = 1e-8
    eps_count: float = 1e-6
    kmeans_iter: int = 25
    n_jobs: int | None = None
    basis_alignment: Literal["rotate", "sign"] = "rotate"

    def __post_init__(self):
        if isinstance(self.spec, str):
            self.spec = SubmodelSpec.from_code(self.spec)
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.fstep not in ("odv", "svd"):
            raise ValueError(f"fstep must be 'odv' or 'svd', got {self.fstep!r}")
        if self.basis_alignment not in ("rotate", "sign"):
            raise ValueError(f"unknown basis_alignment {self.basis_alignment!r}")
        if self.init not in ("kmeans", "random", "given"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "given" and self.init_labels is None:
            raise ValueError("init='given' requires init_labels")
        if min(self.tol_ve, self.tol_m) <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.max_iter, self.ve_max_iter, self.restarts) < 1:
            raise ValueError("iteration caps and restarts must be >= 1")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")

    @property
    def latent_dim(self) -> int:
        return self.K - 1 if self.d is None else self.d

    def workers(self) -> int:
        if self.n_jobs is not None:
            return max(1, int(self.n_jobs))
        return max(1, int(os.environ.get("BFEM_THREADS", "1") or 1))


@dataclass
class FitResult:
    params: ModelParams
    state: VariationalState
    hyper: Hyperparams
    elbo_trace: list
    partition: np.ndarray
    converged: bool
    n_iter: int
    flags: list = field(default_factory=list)
    spec: SubmodelSpec | None = None
    center: np.ndarray | None = None
    fisher_values: np.ndarray | None = None
    restart_elbos: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.params.K

    @property
    def elbo(self) -> float:
        return float(self.elbo_trace[-1])

    def dims(self) -> Dims:
        return Dims(n=max(len(self.partition), self.K), p=self.params.p, K=self.K, d=self.params.d)


# --------------------------------------------------------------------------
# building blocks working on latent coordinates


def _latent(Y: np.ndarray, U: np.ndarray, sq_norms: np.ndarray | None = None):
    X = Y @ U
    if sq_norms is None:
        sq_norms = np.einsum("ij,ij->i", Y, Y)
    orth = np.maximum(sq_norms - np.einsum("ij,ij->i", X, X), 0.0)
    return X, orth


def _log_rho(X, orth, p, params: ModelParams, state: VariationalState) -> np.ndarray:
    """``log pi_k + E_q[log N(y_i | U mu_k, S_k)]`` for every (i, k)."""
    n, d = X.shape
    K = params.K
    out = np.empty((n, K))
    eye = np.eye(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(K):
            L = np.linalg.cholesky(params.sigma[k])
            L_inv = solve_triangular(L, eye, lower=True)
            z = (X - state.m_tilde[k]) @ L_inv.T
            maha = np.einsum("ij,ij->i", z, z)
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
            tr = float(np.sum((L_inv.T @ L_inv) * state.S_tilde[k]))
            beta = params.beta[k]
            out[:, k] = np.log(params.pi[k]) - 0.5 * (
                p * LOG_2PI + logdet + (p - d) * np.log(beta) + maha + orth / beta + tr
            )
    return out


def _tau_from_log_rho(log_rho: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(log_rho)):
        raise NonFinite("non-finite log-density in responsibility update")
    return np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))


def _mu_update(X, tau, params: ModelParams, hyper: Hyperparams, eps_count: float = 0.0):
    n_tilde = tau.sum(axis=0)
    if np.any(n_tilde < eps_count):
        k = int(np.argmin(n_tilde))
        raise EmptyCluster(f"cluster {k} has soft count {n_tilde[k]:.3g}")
    K, d = params.K, X.shape[1]
    sums = tau.T @ X
    eye = np.eye(d)
    m_tilde = np.empty((K, d))
    S_tilde = np.empty((K, d, d))
    for k in range(K):
        sig_inv = np.linalg.inv(params.sigma[k])
        sig_inv = 0.5 * (sig_inv + sig_inv.T)
        S = np.linalg.inv(eye / hyper.lam + n_tilde[k] * sig_inv)
        S = 0.5 * (S + S.T)
        S_tilde[k] = S
        m_tilde[k] = hyper.nu + S @ sig_inv @ (sums[k] - n_tilde[k] * hyper.nu)
    return VariationalState(tau, m_tilde, S_tilde, n_tilde)


def _elbo_parts(log_rho, params: ModelParams, state: VariationalState, hyper: Hyperparams) -> float:
    tau = state.tau
    K, d = params.K, params.d
    data_term = float(np.sum(tau * log_rho) - np.sum(xlogy(tau, tau)))
    dev = state.m_tilde - hyper.nu
    spread = np.einsum("kj,kj->k", dev, dev) + np.trace(state.S_tilde, axis1=1, axis2=2)
    prior = -0.5 * np.sum(d * LOG_2PI + d * np.log(hyper.lam) + spread / hyper.lam)
    logdets = np.linalg.slogdet(state.S_tilde)[1]
    entropy_mu = 0.5 * K * d * (LOG_2PI + 1.0) + 0.5 * np.sum(logdets)
    value = data_term + prior + entropy_mu
    if not np.isfinite(value):
        raise NonFinite("non-finite variational lower bound")
    return value


def _m_step(X, orth, p, state: VariationalState, U, spec: SubmodelSpec, eps_var=1e-8, floor=True):
    tau, n_tilde = state.tau, state.n_tilde
    n, d = X.shape
    K = tau.shape[1]
    pi = n_tilde / n
    sigma = np.empty((K, d, d))
    beta = np.ones(K)
    for k in range(K):
        diff = X - state.m_tilde[k]
        w = tau[:, k]
        sigma[k] = (diff * w[:, None]).T @ diff / n_tilde[k] + state.S_tilde[k]
        if p > d:
            # Tr(C_k) - Tr(U^T C_k U) only involves the residual outside the subspace
            beta[k] = float(w @ orth) / (n_tilde[k] * (p - d))
    raw = ModelParams(pi, sigma, beta, U)
    return enforce_constraints(raw, spec, weights=pi, eps_var=eps_var, floor=floor)


def _empirical_bayes(state: VariationalState) -> Hyperparams:
    K, d = state.m_tilde.shape
    nu = state.m_tilde.mean(axis=0)
    dev = state.m_tilde - nu
    lam = (np.sum(dev * dev) + np.trace(state.S_tilde, axis1=1, axis2=2).sum()) / (d * K)
    return Hyperparams(nu, float(lam))


# --------------------------------------------------------------------------
# public single-step operations (data taken as given, no centering)


def ve_step_tau(Y, params: ModelParams, state: VariationalState, hyper: Hyperparams | None = None):
    """Responsibility update for q(Z) given q(mu) and the parameters."""
    Y = np.asarray(Y, dtype=float)
    X, orth = _latent(Y, params.U)
    return _tau_from_log_rho(_log_rho(X, orth, Y.shape[1], params, state))


def ve_step_mu(Y, params: ModelParams, tau, hyper: Hyperparams, eps_count: float = 0.0):
    """Gaussian update of q(mu_k); returns a new state holding ``tau``."""
    Y = np.asarray(Y, dtype=float)
    return _mu_update(Y @ params.U, np.asarray(tau, dtype=float), params, hyper, eps_count)


def elbo(Y, params: ModelParams, state: VariationalState, hyper: Hyperparams) -> float:
    """Variational lower bound J(q, theta) including both entropy terms."""
    Y = np.asarray(Y, dtype=float)
    X, orth = _latent(Y, params.U)
    return _elbo_parts(_log_rho(X, orth, Y.shape[1], params, state), params, state, hyper)


def ve_step(Y, params, state, hyper, config: FitConfig | None = None, return_trace: bool = False):
    """Fixed-point VE-step alternating the q(Z) and q(mu) updates.

    Stops after ``config.ve_max_iter`` cycles or when the relative change of
    the bound drops below ``config.tol_ve``.
    """
    config = config or FitConfig(K=params.K)
    Y = np.asarray(Y, dtype=float)
    X, orth = _latent(Y, params.U)
    p = Y.shape[1]
    state, trace = _ve_loop(X, orth, p, params, state, hyper, config, eps_count=0.0)
    return (state, trace) if return_trace else state


def _ve_loop(X, orth, p, params, state, hyper, config: FitConfig, eps_count: float):
    log_rho = _log_rho(X, orth, p, params, state)
    current = _elbo_parts(log_rho, params, state, hyper)
    trace = [current]
    for _ in range(config.ve_max_iter):
        previous = current
        tau = _tau_from_log_rho(log_rho)
        state = _mu_update(X, tau, params, hyper, eps_count)
        log_rho = _log_rho(X, orth, p, params, state)
        current = _elbo_parts(log_rho, params, state, hyper)
        trace.append(current)
        if abs((current - previous) / current) < config.tol_ve:
            break
    return state, trace


def m_step(Y, state: VariationalState, U, spec: SubmodelSpec, eps_var: float = 1e-8,
           floor: bool = True) -> ModelParams:
    """Closed-form maximisers of the bound in (pi, Sigma, beta) for ``spec``."""
    Y = np.asarray(Y, dtype=float)
    if isinstance(spec, str):
        spec = SubmodelSpec.from_code(spec)
    X, orth = _latent(Y, U)
    return _m_step(X, orth, Y.shape[1], state, U, spec, eps_var, floor)


def empirical_bayes(state: VariationalState) -> Hyperparams:
    """Maximise the bound in the prior mean and variance of the latent means."""
    if state.m_tilde.shape[0] < 2:
        raise ValueError("empirical Bayes needs K >= 2")
    return _empirical_bayes(state)


def aitken_estimate(j0: float, j1: float, j2: float, eps_c: float = 1e-10):
    """Aitken-extrapolated limit from three successive bound values.

    Returns ``None`` when the ratio of increments is too close to one or the
    first increment vanishes while the second does not.
    """
    inc_prev = j1 - j0
    inc = j2 - j1
    if inc == 0.0:
        return j2
    if inc_prev == 0.0 or not np.isfinite(inc_prev):
        return None
    c = inc / inc_prev
    if c >= 1.0 - eps_c:
        return None
    return j1 + inc / (1.0 - c)


def aitken_converged(trace: Sequence[float], eps_m: float, eps_c: float = 1e-10) -> bool:
    """Compare the two latest Aitken estimates of the limit of ``trace``."""
    if len(trace) < 4:
        return False
    a_prev = aitken_estimate(trace[-4], trace[-3], trace[-2], eps_c)
    a_now = aitken_estimate(trace[-3], trace[-2], trace[-1], eps_c)
    if a_prev is None or a_now is None:
        return False
    return abs(a_now - a_prev) < eps_m


# --------------------------------------------------------------------------
# initialization and driver


@dataclass
class _Prepared:
    Y: np.ndarray
    sq: np.ndarray
    center: np.ndarray
    total: TotalScatter


def _prepare(Y, config: FitConfig) -> _Prepared:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-D array")
    if not np.all(np.isfinite(Y)):
        raise NonFinite("data contain NaN or infinite values")
    center = Y.mean(axis=0) if config.center_data else np.zeros(Y.shape[1])
    Yc = Y - center
    return _Prepared(Yc, np.einsum("ij,ij->i", Yc, Yc), center, total_scatter(Yc))


def _one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(f"labels must lie in 0..{K - 1}")
    Z = np.zeros((labels.size, K))
    Z[np.arange(labels.size), labels] = 1.0
    return Z


def _fstep(data: _Prepared, tau, config: FitConfig, eps_count: float) -> FStepResult:
    scat = scatter_set(data.total, data.Y, tau, eps_count)
    solver = fstep_odv if config.fstep == "odv" else fstep_svd
    return solver(scat, config.latent_dim)


def _initialize(data: _Prepared, config: FitConfig, labels):
    n, p = data.Y.shape
    K, d = config.K, config.latent_dim
    eps_count = config.eps_count * n
    tau = _one_hot(labels, K)
    fres = _fstep(data, tau, config, eps_count)
    U = fres.U
    X, orth = _latent(data.Y, U, data.sq)

    # frequentist M-step: cluster scatter around the soft means in observation space
    counts = tau.sum(axis=0)
    if np.any(counts < eps_count):
        raise EmptyCluster("initial partition has an empty cluster")
    pi = counts / n
    sigma = np.empty((K, d, d))
    beta = np.ones(K)
    for k in range(K):
        w = tau[:, k]
        xbar = w @ X / counts[k]
        dx = X - xbar
        sigma[k] = (dx * w[:, None]).T @ dx / counts[k]
        if p > d:
            ybar = w @ data.Y / counts[k]
            total_var = float(w @ data.sq) / counts[k] - float(ybar @ ybar)
            beta[k] = (total_var - np.trace(sigma[k])) / (p - d)
    params = enforce_constraints(ModelParams(pi, sigma, beta, U), config.spec, eps_var=config.eps_var)

    if config.nu0 is not None:
        nu = np.asarray(config.nu0, dtype=float).reshape(d)
    else:
        nu = X.mean(axis=0)
    hyper = Hyperparams(nu, float(config.lambda0))
    state = _mu_update(X, tau, params, hyper, eps_count)
    return params, state, hyper, fres


def initialize(Y, config: FitConfig, labels=None):
    """Starting point of the algorithm from a hard partition.

    Returns:
        (params, state, hyper, U0).  ``Y`` is centered first when
        ``config.center_data`` is set.
    """
    data = _prepare(Y, config)
    if labels is None:
        labels = _initial_partitions(data.Y, config)[0]
    params, state, hyper, fres = _initialize(data, config, labels)
    return params, state, hyper, fres.U


def restart_seeds(seed, count: int) -> list[int]:
    """Independent integer seeds for ``count`` restarts, derived from ``seed``."""
    ss = np.random.SeedSequence(seed)
    return [int(child.generate_state(1)[0]) for child in ss.spawn(count)]


def _random_partition(n, K, rng, attempts=100):
    for _ in range(attempts):
        labels = rng.integers(K, size=n)
        if np.bincount(labels, minlength=K).min() > 0:
            return labels
    labels = rng.permutation(np.arange(n) % K)
    return labels


def _initial_partitions(Y, config: FitConfig) -> list[np.ndarray]:
    if config.init == "given":
        return [np.asarray(config.init_labels, dtype=int)]
    seeds = restart_seeds(config.seed, config.restarts)
    if config.init == "random":
        return [_random_partition(Y.shape[0], config.K, np.random.default_rng(s)) for s in seeds]
    return [kmeans(Y, config.K, seed=s, max_iter=config.kmeans_iter) for s in seeds]


def _align_signs(U_new: np.ndarray, U_old: np.ndarray) -> np.ndarray:
    signs = np.sign(np.einsum("ij,ij->j", U_new, U_old))
    signs[signs == 0] = 1.0
    return U_new * signs


def _carry_to_basis(U_new, params: ModelParams, state: VariationalState, hyper: Hyperparams):
    """Express the latent quantities of the previous basis in ``U_new``.

    The F-step may permute, flip or rotate the discriminant directions, while
    Sigma_k, q(mu_k) and nu are coordinates in the old basis.  They are mapped
    by the orthogonal factor ``R`` of ``U_new^T U_old`` (the best rotation in
    Frobenius norm); when both bases span the same subspace this is exact.
    """
    W, _, Vt = np.linalg.svd(U_new.T @ params.U)
    R = W @ Vt
    sigma = np.einsum("ij,kjl,ml->kim", R, params.sigma, R)
    sigma = 0.5 * (sigma + np.swapaxes(sigma, 1, 2))
    S_tilde = np.einsum("ij,kjl,ml->kim", R, state.S_tilde, R)
    S_tilde = 0.5 * (S_tilde + np.swapaxes(S_tilde, 1, 2))
    params = replace(params, U=U_new, sigma=sigma)
    state = replace(state, m_tilde=state.m_tilde @ R.T, S_tilde=S_tilde)
    hyper = Hyperparams(R @ hyper.nu, hyper.lam)
    return params, state, hyper


def _run(data: _Prepared, config: FitConfig, labels) -> FitResult:
    n, p = data.Y.shape
    eps_count = config.eps_count * n
    params, state, hyper, fres = _initialize(data, config, labels)
    flags = []
    if fres.rank_deficient:
        flags.append("rank_deficient_fstep")
    X, orth = _latent(data.Y, params.U, data.sq)
    trace = [_elbo_parts(_log_rho(X, orth, p, params, state), params, state, hyper)]
    converged = False
    n_iter = 0
    for t in range(1, config.max_iter + 1):
        n_iter = t
        fres = _fstep(data, state.tau, config, eps_count)
        if fres.rank_deficient and "rank_deficient_fstep" not in flags:
            flags.append("rank_deficient_fstep")
        if config.basis_alignment == "rotate":
            params, state, hyper = _carry_to_basis(fres.U, params, state, hyper)
            params = enforce_constraints(params, config.spec, eps_var=config.eps_var)
        else:
            params = replace(params, U=_align_signs(fres.U, params.U))
        U = params.U
        X, orth = _latent(data.Y, U, data.sq)

        state, _ = _ve_loop(X, orth, p, params, state, hyper, config, eps_count)
        params = _m_step(X, orth, p, state, U, config.spec, config.eps_var)
        if config.empirical_bayes:
            hyper = _empirical_bayes(state)

        trace.append(_elbo_parts(_log_rho(X, orth, p, params, state), params, state, hyper))
        if aitken_converged(trace, config.tol_m):
            converged = True
            break
    if not converged:
        flags.append("max_iter_reached")
    return FitResult(
        params=params,
        state=state,
        hyper=hyper,
        elbo_trace=trace,
        partition=np.argmax(state.tau, axis=1),
        converged=converged,
        n_iter=n_iter,
        flags=flags,
        spec=config.spec,
        center=data.center,
        fisher_values=fres.fisher_values,
    )


def _safe_run(data, config, labels, index):
    try:
        return _run(data, config, labels)
    except (BFEMError, np.linalg.LinAlgError) as exc:
        log.debug("restart %d failed: %s", index, exc)
        return f"restart {index}: {type(exc).__name__}: {exc}"


def fit(Y, config: FitConfig | None = None, init_partitions: Sequence[np.ndarray] | None = None,
        **overrides) -> FitResult:
    """Fit the model with several restarts and keep the best final bound.

    Args:
        Y: (n, p) data matrix.
        config: fit settings; keyword ``overrides`` are applied on top.
        init_partitions: optional precomputed 0-based starting partitions,
            one per restart (used by model selection to share restarts).
    """
    config = replace(config or FitConfig(), **overrides) if overrides or config is None else config
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    Dims(n=n, p=p, K=config.K, d=config.latent_dim)
    data = _prepare(Y, config)
    starts = list(init_partitions) if init_partitions is not None else _initial_partitions(data.Y, config)

    if config.workers() > 1 and len(starts) > 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=config.workers())(
            delayed(_safe_run)(data, config, lab, i) for i, lab in enumerate(starts)
        )
    else:
        outcomes = [_safe_run(data, config, lab, i) for i, lab in enumerate(starts)]

    results = [r for r in outcomes if isinstance(r, FitResult)]
    failures = [r for r in outcomes if isinstance(r, str)]
    if not results:
        raise AllRestartsFailed("; ".join(failures) or "no restart was run")
    best = max(results, key=lambda r: r.elbo)
    best.restart_elbos = [r.elbo if isinstance(r, FitResult) else float("-inf") for r in outcomes]
    best.flags = list(best.flags) + failures
    if data.total.regularized:
        best.flags.append("regularized_total_scatter")
    return best


def predict_tau(Y_new, result: FitResult) -> np.ndarray:
    """Responsibilities of new observations under a fitted model (frozen q(mu))."""
    Y_new = np.atleast_2d(np.asarray(Y_new, dtype=float))
    center = result.center if result.center is not None else 0.0
    return ve_step_tau(Y_new - center, result.params, result.state, result.hyper)


def predict(Y_new, result: FitResult) -> np.ndarray:
    return np.argmax(predict_tau(Y_new, result), axis=1)
