"""ICL-BIC model choice over the number of clusters and the covariance submodel."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .exceptions import BFEMError, EmptyCluster
from .inference import (
    FitConfig,
    FitResult,
    _elbo_parts,
    _initial_partitions,
    _latent,
    _log_rho,
    _mu_update,
    _one_hot,
    fit,
)
from .model import Dims, SubmodelSpec, free_param_count

__all__ = ["SelectionCell", "SelectionResult", "classification_loglik", "icl", "icl_penalty", "select"]

log = logging.getLogger(__name__)


def icl_penalty(spec: SubmodelSpec | str, dims: Dims) -> float:
    """``(gamma / 2) log n`` with ``gamma`` the free parameter count."""
    if isinstance(spec, str):
        spec = SubmodelSpec.from_code(spec)
    return 0.5 * free_param_count(spec, dims) * np.log(dims.n)


def classification_loglik(Y, result: FitResult, labels=None) -> float:
    """Bound evaluated at a hard partition with q(mu) recomputed from it.

    With one-hot responsibilities the Gaussian update of q(mu) is the exact
    posterior of the latent means given the partition, so the value returned
    is the integrated classification log-likelihood ``log p(Y, Z | theta)``.

    Raises:
        EmptyCluster: when the partition leaves a cluster without points.
    """
    Y = np.asarray(Y, dtype=float)
    if result.center is not None:
        Y = Y - result.center
    K = result.K
    if labels is None:
        labels = np.argmax(result.state.tau, axis=1)
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise EmptyCluster(f"hard partition leaves cluster {int(np.argmin(counts))} empty")
    Z = _one_hot(labels, K)
    X, orth = _latent(Y, result.params.U)
    state = _mu_update(X, Z, result.params, result.hyper)
    log_rho = _log_rho(X, orth, Y.shape[1], result.params, state)
    return _elbo_parts(log_rho, result.params, state, result.hyper)


def icl(Y, result: FitResult) -> float:
    """ICL-BIC of a fitted model; ``-inf`` when hardening empties a cluster."""
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    dims = Dims(n=n, p=p, K=result.K, d=result.params.d)
    try:
        value = classification_loglik(Y, result)
    except EmptyCluster:
        return float("-inf")
    return value - icl_penalty(result.spec, dims)


@dataclass
class SelectionCell:
    K: int
    spec: str
    gamma: int
    elbo: float = float("nan")
    icl: float = float("-inf")
    converged: bool = False
    flags: list = field(default_factory=list)
    failed: bool = False
    result: FitResult | None = field(default=None, repr=False)


@dataclass
class SelectionResult:
    """All grid cells and the (K, spec) pair with the largest finite ICL."""

    table: list
    best: tuple | None

    @property
    def best_cell(self) -> SelectionCell | None:
        if self.best is None:
            return None
        return next(c for c in self.table if (c.K, c.spec) == self.best)

    def to_rows(self) -> list[dict]:
        return [
            {
                "K": c.K,
                "spec": c.spec,
                "gamma": c.gamma,
                "elbo": c.elbo,
                "icl": c.icl,
                "converged": c.converged,
                "flags": ";".join(c.flags),
            }
            for c in self.table
        ]

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["K", "spec", "gamma", "elbo", "icl", "converged", "flags"])
            writer.writeheader()
            for row in rows:
                writer.writerow(row)


def _fit_cell(Y, config: FitConfig, starts, K: int, code: str, dims: Dims) -> SelectionCell:
    spec = SubmodelSpec.from_code(code)
    cell = SelectionCell(K=K, spec=code, gamma=free_param_count(spec, dims))
    try:
        res = fit(Y, replace(config, K=K, spec=spec, d=K - 1, n_jobs=1), init_partitions=starts)
    except BFEMError as exc:
        cell.flags = [f"failed: {type(exc).__name__}: {exc}"]
        cell.failed = True
        return cell
    cell.result = res
    cell.elbo = res.elbo
    cell.icl = icl(Y, res)
    cell.converged = res.converged
    cell.flags = list(res.flags)
    return cell


def select(Y, K_range: Iterable[int], specs: Sequence[str | SubmodelSpec], config: FitConfig | None = None,
           keep_fits: bool = True) -> SelectionResult:
    """Fit every (K, spec) pair and pick the largest ICL.

    The latent dimension is ``K - 1`` in every cell.  All submodels at a
    given ``K`` start from the same k-means partitions so that differences
    between cells come from the models only.  A cell whose every restart
    fails is kept in the table with ``icl = -inf`` and ignored for ``best``.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    Ks = sorted(set(int(k) for k in K_range))
    codes = [s.code if isinstance(s, SubmodelSpec) else SubmodelSpec.from_code(s).code for s in specs]
    if not Ks or not codes:
        raise ValueError("selection grid is empty")
    config = config or FitConfig()

    jobs = []
    for K in Ks:
        dims = Dims(n=n, p=p, K=K, d=K - 1)
        kconf = replace(config, K=K, d=K - 1)
        Yc = Y - Y.mean(axis=0) if kconf.center_data else Y
        starts = _initial_partitions(Yc, kconf) if kconf.init != "given" else None
        jobs.extend((K, code, dims, starts) for code in codes)

    workers = config.workers()
    if workers > 1 and len(jobs) > 1:
        from joblib import Parallel, delayed

        cells = Parallel(n_jobs=workers)(
            delayed(_fit_cell)(Y, config, starts, K, code, dims) for K, code, dims, starts in jobs
        )
    else:
        cells = [_fit_cell(Y, config, starts, K, code, dims) for K, code, dims, starts in jobs]

    finite = [c for c in cells if np.isfinite(c.icl)]
    best = max(finite, key=lambda c: c.icl) if finite else None
    if not keep_fits:
        for c in cells:
            c.result = None
    return SelectionResult(cells, (best.K, best.spec) if best else None)
