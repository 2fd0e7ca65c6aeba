"""CSV ingestion and JSON model export/import."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .exceptions import MalformedFile
from .inference import FitResult
from .model import Hyperparams, ModelParams, SubmodelSpec, VariationalState

__all__ = [
    "read_matrix",
    "read_labels",
    "write_matrix",
    "write_labels",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = 1


def read_matrix(path, header: bool = False) -> np.ndarray:
    """Read a comma-separated numeric matrix.

    Args:
        path: file to read.
        header: skip the first row.

    Raises:
        MalformedFile: on a non-numeric cell (1-based row and column are
            reported), ragged rows, or an empty file.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise MalformedFile(f"{path}: row {lineno}, column {col}: cannot parse {cell!r} as a number") from None
            if rows and len(values) != len(rows[0]):
                raise MalformedFile(f"{path}: row {lineno} has {len(values)} columns, expected {len(rows[0])}")
            rows.append(values)
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    out = np.array(rows, dtype=float)
    bad = np.argwhere(~np.isfinite(out))
    if bad.size:
        r, c = bad[0]
        raise MalformedFile(f"{path}: non-finite value at data row {r + 1}, column {c + 1}")
    return out


def read_labels(path, header: bool = False) -> np.ndarray:
    """Read one integer label per row (first column)."""
    M = read_matrix(path, header=header)
    labels = M[:, 0]
    if np.any(labels != np.round(labels)):
        r = int(np.flatnonzero(labels != np.round(labels))[0])
        raise MalformedFile(f"{path}: data row {r + 1}: label {labels[r]} is not an integer")
    return labels.astype(int)


def write_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in M:
            writer.writerow([repr(float(v)) for v in row])


def write_labels(path, labels) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(labels, dtype=int).ravel():
            fh.write(f"{v}\n")


def _finite_or_none(v):
    return v if math.isfinite(v) else None


def model_to_dict(result: FitResult) -> dict:
    """JSON-ready description of a fitted model.

    Matrices are nested lists in row-major order.
    """
    params, hyper, state = result.params, result.hyper, result.state
    dims = result.dims()
    return {
        "format": MODEL_FORMAT,
        "dims": {"n": dims.n, "p": dims.p, "K": dims.K, "d": dims.d},
        "spec": result.spec.code,
        "pi": params.pi.tolist(),
        "sigma": params.sigma.tolist(),
        "beta": params.beta.tolist(),
        "U": params.U.tolist(),
        "nu": hyper.nu.tolist(),
        "lambda": float(hyper.lam),
        "elbo_trace": [_finite_or_none(float(v)) for v in result.elbo_trace],
        "flags": list(result.flags),
        "center": (result.center if result.center is not None else np.zeros(params.p)).tolist(),
        "m_tilde": state.m_tilde.tolist(),
        "S_tilde": state.S_tilde.tolist(),
        "converged": bool(result.converged),
        "n_iter": int(result.n_iter),
    }


_REQUIRED = ("dims", "spec", "pi", "sigma", "beta", "U", "nu", "lambda", "elbo_trace", "flags")


def model_from_dict(doc: dict) -> FitResult:
    missing = [k for k in _REQUIRED + ("m_tilde", "S_tilde") if k not in doc]
    if missing:
        raise MalformedFile(f"model document lacks field(s): {', '.join(missing)}")
    try:
        spec = SubmodelSpec.from_code(doc["spec"])
        params = ModelParams(
            np.asarray(doc["pi"], dtype=float),
            np.asarray(doc["sigma"], dtype=float),
            np.asarray(doc["beta"], dtype=float),
            np.asarray(doc["U"], dtype=float),
        )
        hyper = Hyperparams(np.asarray(doc["nu"], dtype=float), float(doc["lambda"]))
        m_tilde = np.asarray(doc["m_tilde"], dtype=float)
        S_tilde = np.asarray(doc["S_tilde"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise MalformedFile(f"invalid model document: {exc}") from None
    K, d = params.K, params.d
    center = np.asarray(doc.get("center", np.zeros(params.p)), dtype=float)
    shapes_ok = (
        params.pi.shape == (K,) and params.beta.shape == (K,) and params.sigma.shape == (K, d, d)
        and m_tilde.shape == (K, d) and S_tilde.shape == (K, d, d)
        and hyper.nu.shape == (d,) and center.shape == (params.p,)
    )
    if not shapes_ok:
        raise MalformedFile("model arrays have inconsistent shapes")
    # only q(mu) is stored; responsibilities are recomputed by predict
    state = VariationalState(np.zeros((0, K)), m_tilde, S_tilde, np.zeros(K))
    trace = [float("nan") if v is None else float(v) for v in doc["elbo_trace"]]
    return FitResult(
        params=params,
        state=state,
        hyper=hyper,
        elbo_trace=trace,
        partition=np.zeros(0, dtype=int),
        converged=bool(doc.get("converged", False)),
        n_iter=int(doc.get("n_iter", len(trace) - 1)),
        flags=list(doc["flags"]),
        spec=spec,
        center=center,
    )


def save_model(result: FitResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(result), fh, indent=1)
        fh.write("\n")


def load_model(path) -> FitResult:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)
