"""Generators for the benchmark simulation scenarios.

All generators use ``numpy.random.default_rng`` (PCG64) so outputs are
reproducible across platforms for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SimOutput",
    "chang_parameters",
    "gen_chang",
    "SUBSPACE_MEANS",
    "SUBSPACE_SIGMA",
    "SUBSPACE_PI",
    "noise_variance",
    "gen_subspace",
]


@dataclass
class SimOutput:
    """Simulated data with 1-based labels in ``Z``."""

    Y: np.ndarray
    Z: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def labels0(self) -> np.ndarray:
        return self.Z - 1


def chang_parameters():
    """Mean-difference vector ``r`` and shared covariance ``S`` (p = 15)."""
    j = np.arange(1, 16)
    r = 0.95 - 0.05 * j
    f = np.where(j <= 8, -0.9, 0.5)
    S = -0.13 * np.outer(f, f)
    np.fill_diagonal(S, 1.0)
    return r, S


def gen_chang(n: int, seed=None) -> SimOutput:
    """Two-cluster mixture in dimension 15 with means -r/2 and +r/2."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    r, S = chang_parameters()
    z = rng.integers(0, 2, size=n)
    L = np.linalg.cholesky(S)
    noise = rng.standard_normal((n, 15)) @ L.T
    Y = -0.5 * r + np.outer(z, r) + noise
    meta = {"K": 2, "p": 15, "r": r, "S": S, "pi": np.array([0.5, 0.5]), "seed": seed}
    return SimOutput(Y, z + 1, meta)


SUBSPACE_MEANS = 3.0 * np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]])
SUBSPACE_SIGMA = np.array([[1.5, 0.75], [0.75, 0.45]])
SUBSPACE_PI = np.array([0.4, 0.3, 0.3])


def noise_variance(snr_db: float, signal_variance: float = float(np.trace(SUBSPACE_SIGMA))) -> float:
    """Noise variance giving ``snr_db`` for a latent cluster of total variance ``signal_variance``."""
    return signal_variance / 10.0 ** (snr_db / 10.0)


def _random_rotation(p: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.normal(0.0, 10.0, size=(p, p))
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def gen_subspace(n: int, p: int, snr_db: float | None = None, seed=None, beta: float | None = None) -> SimOutput:
    """Three Gaussian clusters in a random 2-D subspace of R^p plus isotropic noise.

    The noise variance is set from ``snr_db`` unless ``beta`` is given; with
    neither, ``beta = 1``.
    """
    K, d = 3, 2
    if p < 3:
        raise ValueError("p must be >= 3")
    if n < K:
        raise ValueError("n must be >= 3")
    if beta is None:
        beta = 1.0 if snr_db is None else noise_variance(snr_db)
    snr = 10.0 * np.log10(np.trace(SUBSPACE_SIGMA) / beta)
    rng = np.random.default_rng(seed)
    D = _random_rotation(p, rng)
    z = rng.choice(K, size=n, p=SUBSPACE_PI)
    L = np.linalg.cholesky(SUBSPACE_SIGMA)
    X = SUBSPACE_MEANS[z] + rng.standard_normal((n, d)) @ L.T
    eps = np.sqrt(beta) * rng.standard_normal((n, p - d))
    Y = np.hstack([X, eps]) @ D.T
    meta = {
        "K": K,
        "d": d,
        "p": p,
        "D": D,
        "U": D[:, :d],
        "beta": beta,
        "snr_db": snr,
        "means": SUBSPACE_MEANS,
        "sigma": SUBSPACE_SIGMA,
        "pi": SUBSPACE_PI,
        "seed": seed,
    }
    return SimOutput(Y, z + 1, meta)
