"""Desk-scale versions of the simulation benchmarks.

Each function returns plain dicts so results can be printed, written to CSV
or checked in tests.  Replicate ``r`` of an experiment always uses the data
seed ``base_seed + r`` and the restart seed ``r``.
"""

from __future__ import annotations

import time

import numpy as np

from .inference import FitConfig, fit
from .metrics import ari
from .model import SubmodelSpec
from .selection import select
from .simulate import gen_chang, gen_subspace

__all__ = ["chang_experiment", "dimension_experiment", "snr_experiment", "selection_experiment"]


def chang_experiment(replicates: int = 20, n: int = 300, restarts: int = 10, base_seed: int = 0) -> dict:
    """Two-cluster recovery on the 15-dimensional Chang design, model ``S_B``."""
    start = time.perf_counter()
    scores = []
    for r in range(replicates):
        sim = gen_chang(n, seed=base_seed + r)
        res = fit(sim.Y, FitConfig(K=2, spec="S_B", restarts=restarts, seed=r))
        scores.append(ari(res.partition, sim.Z))
    return {"ari": scores, "mean_ari": float(np.mean(scores)), "seconds": time.perf_counter() - start}


def dimension_experiment(dims=(25, 55, 105), replicates: int = 10, n: int = 900, fstep: str = "odv",
                         restarts: int = 10, base_seed: int = 1000) -> dict:
    """Three-cluster recovery with unit noise variance as the dimension grows."""
    out = {}
    for p in dims:
        start = time.perf_counter()
        scores = []
        for r in range(replicates):
            sim = gen_subspace(n, p, beta=1.0, seed=base_seed * p + r)
            res = fit(sim.Y, FitConfig(K=3, spec="S_B", fstep=fstep, restarts=restarts, seed=r))
            scores.append(ari(res.partition, sim.Z))
        out[p] = {"ari": scores, "mean_ari": float(np.mean(scores)), "seconds": time.perf_counter() - start}
    return out


def snr_experiment(snr_db: float = 0.0, p: int = 150, replicates: int = 10, n: int = 900, fstep: str = "odv",
                   restarts: int = 10, base_seed: int = 7000) -> dict:
    """Three-cluster recovery at a fixed signal-to-noise ratio."""
    start = time.perf_counter()
    scores = []
    for r in range(replicates):
        sim = gen_subspace(n, p, snr_db=snr_db, seed=base_seed + r)
        res = fit(sim.Y, FitConfig(K=3, spec="S_B", fstep=fstep, restarts=restarts, seed=r))
        scores.append(ari(res.partition, sim.Z))
    return {"ari": scores, "mean_ari": float(np.mean(scores)), "seconds": time.perf_counter() - start}


def selection_experiment(replicates: int = 20, snr_db: float = 3.0, p: int = 150, n: int = 900,
                         K_range=range(2, 6), specs=("S_B", "Sk_B", "AkB", "AB"), restarts: int = 10,
                         base_seed: int = 9000, true_K: int = 3, true_spec: str = "S_B") -> dict:
    """How often ICL picks the generating (K, submodel) pair."""
    start = time.perf_counter()
    picks = []
    true_code = SubmodelSpec.from_code(true_spec).code
    for r in range(replicates):
        sim = gen_subspace(n, p, snr_db=snr_db, seed=base_seed + r)
        sel = select(sim.Y, K_range, specs, FitConfig(restarts=restarts, seed=r), keep_fits=False)
        picks.append(sel.best)
    both = [b == (true_K, true_code) for b in picks]
    k_only = [b is not None and b[0] == true_K for b in picks]
    return {
        "picks": picks,
        "rate_pair": float(np.mean(both)),
        "rate_K": float(np.mean(k_only)),
        "seconds": time.perf_counter() - start,
    }
