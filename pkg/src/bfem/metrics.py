"""Evaluation measures: adjusted Rand index, PSNR and simulation SNR."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, LengthMismatch

__all__ = ["ari", "psnr", "snr_db"]


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def ari(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two partitions."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"partitions have lengths {a.size} and {b.size}")
    if a.size < 2:
        raise LengthMismatch("partitions need at least 2 elements")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(a.size)
    expected = rows * cols / total
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        # both partitions trivial (all singletons or a single block)
        return 1.0
    return float((index - expected) / (max_index - expected))


def psnr(ref, test) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit images; ``inf`` when identical."""
    ref = np.asarray(ref, dtype=float)
    test = np.asarray(test, dtype=float)
    if ref.shape != test.shape:
        raise DimensionMismatch(f"image shapes differ: {ref.shape} vs {test.shape}")
    mse = np.mean((ref - test) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))


def snr_db(sigma, beta: float) -> float:
    """``10 log10(Tr(sigma) / beta)``; ``sigma`` may be a matrix or its trace."""
    sigma = np.asarray(sigma, dtype=float)
    signal = float(np.trace(sigma)) if sigma.ndim == 2 else float(sigma)
    return float(10.0 * np.log10(signal / beta))
