"""Domain types for the Bayesian discriminative latent mixture family.

The observation-space covariance of cluster ``k`` is

    S_k = U Sigma_k U^T + beta_k (I_p - U U^T)

and is never formed by the fitting code; :func:`marginal_covariance` exists
for oracles and diagnostics only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DegenerateCovariance

__all__ = [
    "SigmaStructure",
    "SubmodelSpec",
    "ALL_SPECS",
    "SPEC_CODES",
    "Dims",
    "ModelParams",
    "Hyperparams",
    "VariationalState",
    "free_param_count",
    "full_gmm_param_count",
    "spherical_gmm_param_count",
    "marginal_covariance",
    "enforce_constraints",
]


class SigmaStructure(enum.Enum):
    FULL = "full"
    DIAGONAL = "diagonal"
    ISOTROPIC = "isotropic"


_SIGMA_PREFIX = {
    (SigmaStructure.FULL, False): "Sk",
    (SigmaStructure.FULL, True): "S",
    (SigmaStructure.DIAGONAL, False): "Akj",
    (SigmaStructure.DIAGONAL, True): "Aj",
    (SigmaStructure.ISOTROPIC, False): "Ak",
    (SigmaStructure.ISOTROPIC, True): "A",
}


@dataclass(frozen=True)
class SubmodelSpec:
    """One of the 12 covariance constraints of the model family.

    ``sigma_shared`` means a single latent covariance for all clusters and
    ``beta_shared`` a single noise variance.
    """

    sigma_structure: SigmaStructure = SigmaStructure.FULL
    sigma_shared: bool = False
    beta_shared: bool = False

    @property
    def code(self) -> str:
        prefix = _SIGMA_PREFIX[(self.sigma_structure, self.sigma_shared)]
        beta = "B" if self.beta_shared else "Bk"
        sep = "_" if self.sigma_structure is SigmaStructure.FULL else ""
        return prefix + sep + beta

    @classmethod
    def from_code(cls, code: str) -> "SubmodelSpec":
        try:
            return _CODE_TO_SPEC[code]
        except KeyError:
            raise ValueError(
                f"unknown submodel code {code!r}; expected one of {', '.join(SPEC_CODES)}"
            ) from None

    def __str__(self) -> str:
        return self.code


ALL_SPECS: tuple[SubmodelSpec, ...] = tuple(
    SubmodelSpec(structure, sigma_shared, beta_shared)
    for structure in SigmaStructure
    for sigma_shared in (False, True)
    for beta_shared in (False, True)
)
SPEC_CODES: tuple[str, ...] = tuple(s.code for s in ALL_SPECS)
_CODE_TO_SPEC = {s.code: s for s in ALL_SPECS}


@dataclass(frozen=True)
class Dims:
    n: int
    p: int
    K: int
    d: int

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not 1 <= self.d <= min(self.K - 1, self.p):
            raise ValueError(
                f"d must satisfy 1 <= d <= min(K-1, p) = {min(self.K - 1, self.p)}, got {self.d}"
            )
        if self.n < self.K:
            raise ValueError(f"need n >= K, got n={self.n}, K={self.K}")


@dataclass
class ModelParams:
    """Mixture parameters.

    Attributes:
        pi: (K,) mixture proportions.
        sigma: (K, d, d) latent covariances.
        beta: (K,) noise variances outside the subspace.
        U: (p, d) column-orthonormal loading matrix.
    """

    pi: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    U: np.ndarray

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.pi.copy(), self.sigma.copy(), self.beta.copy(), self.U.copy())

    def check(self, spec: SubmodelSpec | None = None, atol: float = 1e-10) -> None:
        """Raise ``ValueError`` if an invariant is violated."""
        if not np.isclose(self.pi.sum(), 1.0, atol=1e-10) or np.any(self.pi <= 0):
            raise ValueError("pi must be positive and sum to 1")
        if np.any(self.beta <= 0):
            raise ValueError("beta must be positive")
        for s in self.sigma:
            if not np.allclose(s, s.T, atol=1e-12):
                raise ValueError("sigma_k must be symmetric")
            if np.linalg.eigvalsh(s)[0] <= 0:
                raise ValueError("sigma_k must be positive definite")
        gram = self.U.T @ self.U
        if np.linalg.norm(gram - np.eye(self.d)) > atol:
            raise ValueError("U must be column-orthonormal")
        if spec is None:
            return
        if spec.beta_shared and np.ptp(self.beta) > 0:
            raise ValueError("beta must be shared")
        if spec.sigma_shared and np.any(self.sigma != self.sigma[0]):
            raise ValueError("sigma must be shared")
        if spec.sigma_structure is not SigmaStructure.FULL:
            off = self.sigma * (1 - np.eye(self.d))
            if np.any(off != 0):
                raise ValueError("sigma must be diagonal")
        if spec.sigma_structure is SigmaStructure.ISOTROPIC:
            diag = np.diagonal(self.sigma, axis1=1, axis2=2)
            if np.any(diag != diag[:, :1]):
                raise ValueError("sigma must be isotropic")


@dataclass
class Hyperparams:
    """Prior ``mu_k ~ N(nu, lam * I_d)`` on the latent cluster means."""

    nu: np.ndarray
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    def copy(self) -> "Hyperparams":
        return Hyperparams(self.nu.copy(), float(self.lam))


@dataclass
class VariationalState:
    """Mean-field posterior: q(z_i) = Mult(tau_i), q(mu_k) = N(m_tilde_k, S_tilde_k)."""

    tau: np.ndarray
    m_tilde: np.ndarray
    S_tilde: np.ndarray
    n_tilde: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_tilde is None:
            self.n_tilde = self.tau.sum(axis=0)

    def copy(self) -> "VariationalState":
        return replace(
            self,
            tau=self.tau.copy(),
            m_tilde=self.m_tilde.copy(),
            S_tilde=self.S_tilde.copy(),
            n_tilde=self.n_tilde.copy(),
        )


def free_param_count(spec: SubmodelSpec, dims: Dims) -> int:
    """Number of free parameters (the ICL penalty dimension)."""
    K, p, d = dims.K, dims.p, dims.d
    omega = K - 1 + p * d - d * (d + 1) // 2
    per_cluster = {
        SigmaStructure.FULL: d * (d + 1) // 2,
        SigmaStructure.DIAGONAL: d,
        SigmaStructure.ISOTROPIC: 1,
    }[spec.sigma_structure]
    sigma_part = per_cluster if spec.sigma_shared else K * per_cluster
    beta_part = 1 if spec.beta_shared else K
    return omega + sigma_part + beta_part


def full_gmm_param_count(p: int, K: int) -> int:
    return K - 1 + K * p + K * p * (p + 1) // 2


def spherical_gmm_param_count(p: int, K: int) -> int:
    return K - 1 + 2 * K * p


def marginal_covariance(params: ModelParams, k: int) -> np.ndarray:
    U = params.U
    proj = U @ U.T
    S = U @ params.sigma[k] @ U.T + params.beta[k] * (np.eye(params.p) - proj)
    return 0.5 * (S + S.T)


def enforce_constraints(
    params: ModelParams,
    spec: SubmodelSpec,
    weights: np.ndarray | None = None,
    eps_var: float = 1e-8,
    floor: bool = True,
) -> ModelParams:
    """Project raw M-step estimates onto the constraint set of ``spec``.

    Shared quantities are averaged across clusters with ``weights`` (the
    mixture proportions by default), which reproduces the pooled estimators.
    Variances are floored at ``eps_var``.
    """
    w = params.pi if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    sigma = np.array(params.sigma, dtype=float, copy=True)
    beta = np.array(params.beta, dtype=float, copy=True)
    K, d = sigma.shape[0], sigma.shape[1]

    sigma = 0.5 * (sigma + np.swapaxes(sigma, 1, 2))
    if spec.sigma_structure is SigmaStructure.DIAGONAL:
        sigma = np.diagonal(sigma, axis1=1, axis2=2)[:, :, None] * np.eye(d)
    elif spec.sigma_structure is SigmaStructure.ISOTROPIC:
        alpha = np.trace(sigma, axis1=1, axis2=2) / d
        sigma = alpha[:, None, None] * np.eye(d)
    if spec.sigma_shared:
        sigma = np.broadcast_to(np.tensordot(w, sigma, axes=1), (K, d, d)).copy()
    if spec.beta_shared:
        beta = np.full(K, float(w @ beta))

    if spec.sigma_structure is SigmaStructure.FULL:
        for k in range(K):
            evals, evecs = np.linalg.eigh(sigma[k])
            if evals[0] > eps_var:
                continue
            if not floor and evals[0] <= 0:
                raise DegenerateCovariance(f"latent covariance of cluster {k} is not positive definite")
            sigma[k] = (evecs * np.maximum(evals, eps_var)) @ evecs.T
            sigma[k] = 0.5 * (sigma[k] + sigma[k].T)
    else:
        diag = np.diagonal(sigma, axis1=1, axis2=2)
        if np.any(diag <= eps_var):
            if not floor and np.any(diag <= 0):
                raise DegenerateCovariance("non-positive latent variance")
            sigma = np.maximum(diag, eps_var)[:, :, None] * np.eye(d)
    if np.any(beta <= eps_var):
        if not floor and np.any(beta <= 0):
            raise DegenerateCovariance("non-positive noise variance")
        beta = np.maximum(beta, eps_var)

    return ModelParams(params.pi.copy(), sigma, beta, params.U.copy())
