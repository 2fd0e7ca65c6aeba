import numpy as np
import pytest

from bfem.simulate import (
    SUBSPACE_SIGMA,
    chang_parameters,
    gen_chang,
    gen_subspace,
    noise_variance,
)


def test_chang_parameters():
    r, S = chang_parameters()
    assert r[0] == pytest.approx(0.9)
    assert r[-1] == pytest.approx(0.2)
    assert S[0, 1] == pytest.approx(-0.13 * 0.81)
    assert S[0, 10] == pytest.approx(-0.13 * -0.45)
    assert S[10, 11] == pytest.approx(-0.13 * 0.25)
    assert np.all(np.diag(S) == 1.0)
    assert np.linalg.eigvalsh(S)[0] > 0


def test_chang_shapes_and_determinism():
    a = gen_chang(300, seed=7)
    b = gen_chang(300, seed=7)
    assert a.Y.shape == (300, 15)
    assert set(np.unique(a.Z)) == {1, 2}
    np.testing.assert_array_equal(a.Y, b.Y)


def test_chang_means():
    sim = gen_chang(20000, seed=0)
    r, S = chang_parameters()
    for lab, sign in ((1, -0.5), (2, 0.5)):
        np.testing.assert_allclose(sim.Y[sim.Z == lab].mean(0), sign * r, atol=0.04)
    resid = sim.Y - np.where(sim.Z[:, None] == 2, 0.5, -0.5) * r
    np.testing.assert_allclose(np.cov(resid.T), S, atol=0.05)


def test_noise_variance_values():
    # 3 dB roughly halves the noise relative to the signal trace 1.95
    assert noise_variance(0.0) == pytest.approx(1.95)
    assert noise_variance(3.0) == pytest.approx(1.95 / 10**0.3)
    assert noise_variance(-6.0) == pytest.approx(1.95 * 10**0.6)


def test_subspace_structure():
    sim = gen_subspace(3000, 12, beta=0.5, seed=3)
    D = sim.meta["D"]
    np.testing.assert_allclose(D.T @ D, np.eye(12), atol=1e-12)
    latent = sim.Y @ D
    # noise coordinates have variance beta
    assert latent[:, 2:].var() == pytest.approx(0.5, rel=0.05)
    for k in range(3):
        pts = latent[sim.Z == k + 1, :2]
        np.testing.assert_allclose(pts.mean(0), [0.0, 3.0 * (k + 1)], atol=0.15)
        np.testing.assert_allclose(np.cov(pts.T), SUBSPACE_SIGMA, atol=0.15)
    props = np.bincount(sim.Z, minlength=4)[1:] / 3000
    np.testing.assert_allclose(props, [0.4, 0.3, 0.3], atol=0.03)


def test_subspace_snr_meta():
    sim = gen_subspace(50, 10, snr_db=3.0, seed=1)
    assert sim.meta["snr_db"] == pytest.approx(3.0)
    assert gen_subspace(50, 10, seed=1).meta["beta"] == 1.0


def test_invalid_sizes():
    with pytest.raises(ValueError):
        gen_subspace(2, 10)
    with pytest.raises(ValueError):
        gen_chang(1)
