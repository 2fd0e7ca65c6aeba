import numpy as np
import pytest

from bfem.exceptions import DegenerateCovariance
from bfem.model import (
    ALL_SPECS,
    SPEC_CODES,
    Dims,
    Hyperparams,
    ModelParams,
    SigmaStructure,
    SubmodelSpec,
    enforce_constraints,
    free_param_count,
    full_gmm_param_count,
    marginal_covariance,
    spherical_gmm_param_count,
)

# free parameter counts for p=100, K=4, d=3
TABLE_COUNTS = {
    "Sk_Bk": 325, "Sk_B": 322, "S_Bk": 307, "S_B": 304,
    "AkjBk": 313, "AkjB": 310, "AjBk": 304, "AjB": 301,
    "AkBk": 305, "AkB": 302, "ABk": 302, "AB": 299,
}


def test_twelve_distinct_codes():
    assert len(SPEC_CODES) == 12
    assert set(SPEC_CODES) == set(TABLE_COUNTS)


@pytest.mark.parametrize("code", list(TABLE_COUNTS))
def test_free_param_count_table(code):
    dims = Dims(n=1000, p=100, K=4, d=3)
    assert free_param_count(SubmodelSpec.from_code(code), dims) == TABLE_COUNTS[code]


def test_baseline_counts():
    assert full_gmm_param_count(100, 4) == 20603
    assert spherical_gmm_param_count(100, 4) == 803


def test_from_code_roundtrip_and_error():
    for spec in ALL_SPECS:
        assert SubmodelSpec.from_code(spec.code) == spec
    with pytest.raises(ValueError, match="unknown submodel"):
        SubmodelSpec.from_code("Sk_Bq")


def test_sharing_reduces_count():
    dims = Dims(n=50, p=20, K=3, d=2)
    for s in (SigmaStructure.FULL, SigmaStructure.DIAGONAL, SigmaStructure.ISOTROPIC):
        free = free_param_count(SubmodelSpec(s, False, False), dims)
        assert free_param_count(SubmodelSpec(s, True, False), dims) < free
        assert free_param_count(SubmodelSpec(s, False, True), dims) == free - dims.K + 1


@pytest.mark.parametrize("kwargs", [
    dict(n=10, p=5, K=1, d=1),
    dict(n=10, p=5, K=3, d=3),
    dict(n=10, p=5, K=3, d=0),
    dict(n=2, p=5, K=3, d=1),
    dict(n=10, p=1, K=2, d=1),
])
def test_dims_validation(kwargs):
    with pytest.raises(ValueError):
        Dims(**kwargs)


def test_hyperparams_positive_lambda():
    with pytest.raises(ValueError):
        Hyperparams(np.zeros(2), 0.0)


def _params(rng, K=3, d=2, p=6):
    Q, _ = np.linalg.qr(rng.standard_normal((p, d)))
    sig = []
    for _ in range(K):
        A = rng.standard_normal((d, d))
        sig.append(A @ A.T + 0.1 * np.eye(d))
    return ModelParams(np.array([0.2, 0.3, 0.5]), np.array(sig), rng.uniform(0.5, 2, K), Q)


def test_enforce_constraints_shapes():
    rng = np.random.default_rng(3)
    raw = _params(rng)
    for spec in ALL_SPECS:
        out = enforce_constraints(raw, spec)
        out.check(spec)


def test_shared_sigma_is_weighted_average():
    rng = np.random.default_rng(4)
    raw = _params(rng)
    out = enforce_constraints(raw, SubmodelSpec.from_code("S_Bk"))
    expected = np.tensordot(raw.pi, raw.sigma, axes=1)
    for k in range(3):
        np.testing.assert_allclose(out.sigma[k], expected, atol=1e-12)
    np.testing.assert_allclose(out.beta, raw.beta)


def test_isotropic_shared_beta():
    rng = np.random.default_rng(5)
    raw = _params(rng)
    out = enforce_constraints(raw, SubmodelSpec.from_code("AkB"))
    alpha = np.trace(raw.sigma, axis1=1, axis2=2) / 2
    np.testing.assert_allclose(np.diagonal(out.sigma, axis1=1, axis2=2), np.repeat(alpha[:, None], 2, 1))
    np.testing.assert_allclose(out.beta, np.full(3, raw.pi @ raw.beta))


def test_floor_and_degenerate():
    rng = np.random.default_rng(6)
    raw = _params(rng)
    raw.beta[1] = -1.0
    floored = enforce_constraints(raw, SubmodelSpec.from_code("Sk_Bk"), eps_var=1e-6)
    assert floored.beta[1] == 1e-6
    with pytest.raises(DegenerateCovariance):
        enforce_constraints(raw, SubmodelSpec.from_code("Sk_Bk"), floor=False)


def test_marginal_covariance_structure():
    rng = np.random.default_rng(7)
    params = _params(rng)
    S = marginal_covariance(params, 0)
    U = params.U
    np.testing.assert_allclose(U.T @ S @ U, params.sigma[0], atol=1e-12)
    w = np.linalg.svd(np.eye(6) - U @ U.T)[0][:, 0]
    assert w @ S @ w == pytest.approx(params.beta[0])


def test_check_rejects_non_orthonormal():
    rng = np.random.default_rng(8)
    params = _params(rng)
    params.U = params.U * 1.1
    with pytest.raises(ValueError, match="orthonormal"):
        params.check()
