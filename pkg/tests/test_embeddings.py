"""Embedding store: file format, validation errors, prototype aggregation."""

import json

import numpy as np
import pytest

from blindmatch.embeddings import (
    EmbeddingMatrix,
    class_prototypes,
    load_embeddings,
    normalize_rows,
    save_embeddings,
)
from blindmatch.exceptions import (
    ChecksumMismatchError,
    LabelError,
    MissingFileError,
    NonFiniteError,
    ShapeMismatchError,
    ZeroRowError,
)


@pytest.fixture
def basis_rows(tmp_path):
    data = np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32)
    return save_embeddings(data, tmp_path, "basis")


def test_round_trip_identity_basis(basis_rows):
    emb = load_embeddings(basis_rows)
    assert emb.n == 2 and emb.d == 3
    np.testing.assert_array_equal(emb.data, [[1, 0, 0], [0, 1, 0]])


def test_load_does_not_normalize(tmp_path):
    data = np.array([[3.0, 4.0]], dtype=np.float32)
    path = save_embeddings(data, tmp_path, "raw")
    emb = load_embeddings(path)
    np.testing.assert_array_equal(emb.data, [[3.0, 4.0]])


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingFileError):
        load_embeddings(tmp_path / "nope.json")


def test_blob_length_mismatch(tmp_path, basis_rows):
    manifest = json.loads(basis_rows.read_text())
    manifest["n"] = 3
    bad = tmp_path / "bad.manifest.json"
    bad.write_text(json.dumps(manifest))
    with pytest.raises(ShapeMismatchError):
        load_embeddings(bad)


def test_checksum_mismatch(tmp_path, basis_rows):
    manifest = json.loads(basis_rows.read_text())
    manifest["checksum"] = "sha256:" + "0" * 64
    bad = tmp_path / "bad.manifest.json"
    bad.write_text(json.dumps(manifest))
    with pytest.raises(ChecksumMismatchError):
        load_embeddings(bad)


def test_non_finite_blob(tmp_path):
    data = np.array([[1.0, np.nan]], dtype=np.float32)
    blob = tmp_path / "x.f32"
    blob.write_bytes(data.tobytes())
    import hashlib

    manifest = {
        "format_version": 1, "n": 1, "d": 2, "dtype": "float32",
        "blob": "x.f32", "labels": None,
        "checksum": "sha256:" + hashlib.sha256(blob.read_bytes()).hexdigest(),
    }
    path = tmp_path / "x.manifest.json"
    path.write_text(json.dumps(manifest))
    with pytest.raises(NonFiniteError):
        load_embeddings(path)


def test_error_codes_are_distinct():
    codes = {
        MissingFileError.code, ShapeMismatchError.code,
        ChecksumMismatchError.code, NonFiniteError.code, ZeroRowError("x" == "y" and 0 or 0).code,
    }
    assert len(codes) == 5


def test_labels_round_trip(tmp_path):
    data = np.random.default_rng(0).standard_normal((6, 4)).astype(np.float32)
    labels = np.array([0, 0, 1, 1, 2, 2])
    path = save_embeddings(data, tmp_path, "labeled", labels=labels)
    emb = load_embeddings(path)
    np.testing.assert_array_equal(emb.labels, labels)
    assert emb.n_classes == 3


def test_labels_must_be_contiguous():
    data = np.ones((3, 2), dtype=np.float32)
    with pytest.raises(LabelError):
        EmbeddingMatrix(data, labels=np.array([0, 2, 2]))


def test_normalize_rows_three_four_five():
    emb = EmbeddingMatrix(np.array([[3.0, 4.0]], dtype=np.float32))
    out = normalize_rows(emb)
    np.testing.assert_allclose(out.data, [[0.6, 0.8]], atol=1e-7)


def test_normalize_rows_mixed():
    emb = EmbeddingMatrix(np.array([[1.0, 0.0], [0.0, 2.0]], dtype=np.float32))
    out = normalize_rows(emb)
    np.testing.assert_allclose(out.data, [[1, 0], [0, 1]], atol=1e-7)


def test_normalize_zero_row_reports_index():
    emb = EmbeddingMatrix(np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.float32))
    with pytest.raises(ZeroRowError) as err:
        normalize_rows(emb)
    assert err.value.row == 1


def test_prototype_single_row_class():
    emb = EmbeddingMatrix(np.array([[1.0, 0.0]], dtype=np.float32), labels=np.array([0]))
    proto = class_prototypes(emb, fraction=1.0, seed=0)
    np.testing.assert_allclose(proto.data, [[1.0, 0.0]], atol=1e-7)


def test_prototype_two_row_average():
    emb = EmbeddingMatrix(
        np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32), labels=np.array([0, 0])
    )
    proto = class_prototypes(emb, fraction=1.0, seed=0)
    root_half = 1.0 / np.sqrt(2.0)
    np.testing.assert_allclose(proto.data, [[root_half, root_half]], atol=1e-7)


def test_prototypes_deterministic_per_seed():
    rng = np.random.default_rng(1)
    emb = EmbeddingMatrix(
        rng.standard_normal((40, 8)).astype(np.float32),
        labels=np.repeat(np.arange(4), 10),
    )
    a = class_prototypes(emb, fraction=0.5, seed=7)
    b = class_prototypes(emb, fraction=0.5, seed=7)
    assert np.array_equal(a.data, b.data)
    c = class_prototypes(emb, fraction=0.5, seed=8)
    assert not np.array_equal(a.data, c.data)


def test_prototypes_fraction_one_is_seed_independent():
    rng = np.random.default_rng(2)
    emb = EmbeddingMatrix(
        rng.standard_normal((30, 5)).astype(np.float32), labels=np.repeat(np.arange(3), 10)
    )
    a = class_prototypes(emb, fraction=1.0, seed=0)
    b = class_prototypes(emb, fraction=1.0, seed=999)
    assert np.array_equal(a.data, b.data)


def test_prototypes_unit_norm():
    rng = np.random.default_rng(3)
    emb = EmbeddingMatrix(
        (5.0 * rng.standard_normal((60, 16))).astype(np.float32),
        labels=np.repeat(np.arange(6), 10),
    )
    proto = class_prototypes(emb, fraction=0.5, seed=0)
    norms = np.linalg.norm(proto.data.astype(np.float64), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-5)


def test_prototypes_require_labels():
    emb = EmbeddingMatrix(np.ones((2, 2), dtype=np.float32))
    with pytest.raises(LabelError):
        class_prototypes(emb)


def test_prototype_subsample_rounding_keeps_classes_nonempty():
    emb = EmbeddingMatrix(
        np.eye(3, dtype=np.float32), labels=np.array([0, 1, 2])
    )
    proto = class_prototypes(emb, fraction=0.01, seed=0)
    assert proto.n == 3


def test_select_subset_of_prototypes():
    emb = EmbeddingMatrix(np.eye(4, dtype=np.float32), labels=np.arange(4))
    proto = class_prototypes(emb)
    sub = proto.select([2, 0])
    np.testing.assert_array_equal(sub.class_ids, [2, 0])
    np.testing.assert_allclose(sub.data, [[0, 0, 1, 0], [1, 0, 0, 0]], atol=1e-7)
