import numpy as np
import pytest

from bfem import FitConfig, fit, gen_subspace, predict, predict_tau
from bfem.exceptions import MalformedFile
from bfem.io import (
    load_model,
    model_from_dict,
    model_to_dict,
    read_labels,
    read_matrix,
    save_model,
    write_labels,
    write_matrix,
)


def test_matrix_roundtrip_is_exact(tmp_path):
    M = np.random.default_rng(0).standard_normal((7, 4)) * 1e3
    path = tmp_path / "m.csv"
    write_matrix(path, M)
    np.testing.assert_array_equal(read_matrix(path), M)


def test_header_skipped(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    np.testing.assert_array_equal(read_matrix(path, header=True), [[1, 2], [3, 4]])


@pytest.mark.parametrize("text, match", [
    ("1,2\n3,x\n", "row 2, column 2"),
    ("1,2\n3\n", "row 2 has 1 columns"),
    ("1,nan\n", "non-finite"),
    ("", "no data rows"),
])
def test_malformed_matrix(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(MalformedFile, match=match):
        read_matrix(path)


def test_labels(tmp_path):
    path = tmp_path / "z.csv"
    write_labels(path, [1, 2, 2, 3])
    np.testing.assert_array_equal(read_labels(path), [1, 2, 2, 3])
    path.write_text("1\n2.5\n")
    with pytest.raises(MalformedFile, match="not an integer"):
        read_labels(path)


@pytest.fixture(scope="module")
def fitted():
    sim = gen_subspace(200, 12, beta=1.0, seed=3)
    return sim.Y, fit(sim.Y, FitConfig(K=3, spec="S_B", restarts=1))


def test_model_roundtrip_predicts_identically(tmp_path, fitted):
    Y, res = fitted
    path = tmp_path / "model.json"
    save_model(res, path)
    back = load_model(path)
    np.testing.assert_array_equal(back.params.U, res.params.U)
    np.testing.assert_array_equal(back.state.m_tilde, res.state.m_tilde)
    np.testing.assert_array_equal(predict(Y, back), predict(Y, res))
    np.testing.assert_array_equal(predict_tau(Y, back), predict_tau(Y, res))
    assert back.elbo_trace == res.elbo_trace


def test_model_document_validation(fitted):
    _, res = fitted
    doc = model_to_dict(res)
    del doc["U"]
    with pytest.raises(MalformedFile, match="lacks"):
        model_from_dict(doc)
    doc = model_to_dict(res)
    doc["nu"] = [0.0] * 7
    with pytest.raises(MalformedFile):
        model_from_dict(doc)


def test_load_invalid_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(MalformedFile, match="invalid JSON"):
        load_model(path)
