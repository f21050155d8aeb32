"""Core data types and file formats."""

import struct

import numpy as np
import pytest

from streamhash.data import (
    CategoryRegistry,
    CodeMatrix,
    Dataset,
    FeatureChunk,
    FeatureMatrix,
    FormatError,
    LabelMatrix,
    load_feature_matrix,
    read_fmat,
    read_imat,
    read_lmat,
    sign_quantize,
    validate_chunk,
    write_fmat,
    write_imat,
    write_lmat,
)


class TestFmatFormat:
    def test_declared_layout_reads_row_major(self, tmp_path):
        path = tmp_path / "a.fmat"
        payload = struct.pack("<4sII", b"FMT1", 2, 3) + struct.pack("<6d", 1, 2, 3, 4, 5, 6)
        path.write_bytes(payload)
        values = read_fmat(path)
        assert values.shape == (2, 3)
        assert np.array_equal(values, [[1, 2, 3], [4, 5, 6]])

    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        values = rng.standard_normal((5, 9)) * 1e-30
        path = tmp_path / "b.fmat"
        write_fmat(path, values)
        back = read_fmat(path)
        assert back.tobytes() == values.astype("<f8").tobytes()

    def test_zero_rows_accepted(self, tmp_path):
        path = tmp_path / "z.fmat"
        path.write_bytes(struct.pack("<4sII", b"FMT1", 0, 4))
        assert read_fmat(path).shape == (0, 4)

    def test_nan_payload_reports_offset(self, tmp_path):
        path = tmp_path / "n.fmat"
        path.write_bytes(
            struct.pack("<4sII", b"FMT1", 1, 3) + struct.pack("<3d", 1.0, np.nan, 3.0)
        )
        with pytest.raises(FormatError) as err:
            read_fmat(path)
        assert err.value.offset == 12 + 8

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fmat"
        path.write_bytes(b"XXXX" + struct.pack("<II", 1, 1) + struct.pack("<d", 1.0))
        with pytest.raises(FormatError) as err:
            read_fmat(path)
        assert err.value.offset == 0

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.fmat"
        path.write_bytes(struct.pack("<4sII", b"FMT1", 2, 2) + struct.pack("<d", 1.0))
        with pytest.raises(FormatError) as err:
            read_fmat(path)
        assert err.value.offset == 20

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "x.fmat"
        path.write_bytes(struct.pack("<4sII", b"FMT1", 1, 1) + struct.pack("<d", 1.0) + b"!")
        with pytest.raises(FormatError) as err:
            read_fmat(path)
        assert err.value.offset == 20

    def test_load_feature_matrix(self, tmp_path):
        path = tmp_path / "m.fmat"
        write_fmat(path, [[1.0, 2.0]])
        fm = load_feature_matrix(path, modality_id=2)
        assert fm.modality_id == 2 and fm.dim == 1 and fm.count == 2


class TestLmatImatFormats:
    def test_lmat_roundtrip(self, tmp_path):
        values = np.array([[1, 0, 1], [0, 1, 1]], dtype=np.uint8)
        path = tmp_path / "l.lmat"
        write_lmat(path, values)
        assert np.array_equal(read_lmat(path), values)

    def test_lmat_bad_entry_offset(self, tmp_path):
        path = tmp_path / "l.lmat"
        path.write_bytes(struct.pack("<4sII", b"LMT1", 1, 3) + bytes([0, 1, 2]))
        with pytest.raises(FormatError) as err:
            read_lmat(path)
        assert err.value.offset == 14

    def test_imat_roundtrip(self, tmp_path):
        values = np.array([[1, -1], [-1, 1]], dtype=np.int8)
        path = tmp_path / "c.imat"
        write_imat(path, values)
        assert np.array_equal(read_imat(path), values)

    def test_imat_rejects_zero(self, tmp_path):
        path = tmp_path / "c.imat"
        path.write_bytes(struct.pack("<4sII", b"IMT1", 1, 2) + bytes([1, 0]))
        with pytest.raises(FormatError) as err:
            read_imat(path)
        assert err.value.offset == 13


class TestSignQuantize:
    def test_mixed_signs(self):
        out = sign_quantize([[0.5, -0.2], [-3.0, 4.0]])
        assert np.array_equal(out.values, [[1, -1], [-1, 1]])

    def test_zero_maps_to_plus_one(self):
        assert sign_quantize([[0.0]]).values[0, 0] == 1

    def test_all_positive(self):
        assert (sign_quantize(np.full((3, 4), 2.5)).values == 1).all()

    def test_idempotent_on_codes(self):
        rng = np.random.default_rng(3)
        codes = rng.choice([-1, 1], size=(8, 20))
        assert np.array_equal(sign_quantize(codes).values, codes)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            sign_quantize([[np.inf]])


class TestDomainTypes:
    def test_feature_matrix_rejects_nan(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.array([[np.nan]]))

    def test_label_matrix_requires_binary(self):
        with pytest.raises(ValueError):
            LabelMatrix([[0, 2]])

    def test_code_matrix_requires_pm_one(self):
        with pytest.raises(ValueError):
            CodeMatrix([[1, 0]])

    def test_values_immutable(self):
        fm = FeatureMatrix([[1.0, 2.0]])
        with pytest.raises(ValueError):
            fm.values[0, 0] = 3.0


class TestCategoryRegistry:
    def test_indices_stable_across_registrations(self):
        staged = CategoryRegistry()
        staged.register(["tree", "sky"], round_=1)
        staged.register(["water"], round_=2)
        whole = CategoryRegistry()
        whole.register(["tree", "sky", "water"], round_=1)
        for name in ("tree", "sky"):
            assert staged.index_of(name) == whole.index_of(name)
        assert staged.index_of("water") == 2

    def test_duplicate_rejected(self):
        reg = CategoryRegistry()
        reg.register(["a"], round_=1)
        with pytest.raises(ValueError):
            reg.register(["a"], round_=2)

    def test_old_new_counts(self):
        reg = CategoryRegistry()
        reg.register(["a", "b"], round_=1)
        reg.register(["c"], round_=3)
        assert reg.old_count(3) == 2
        assert reg.new_count(3) == 1
        assert reg.new_count(2) == 0

    def test_copy_is_independent(self):
        reg = CategoryRegistry()
        reg.register(["a"], round_=1)
        other = reg.copy()
        other.register(["b"], round_=2)
        assert "b" not in reg


def _chunk(n=4, names=("a", "b"), labels=None, second_cols=None):
    rng = np.random.default_rng(0)
    if labels is None:
        labels = np.zeros((len(names), n), dtype=np.uint8)
        labels[0, :] = 1
    m1 = FeatureMatrix(rng.standard_normal((3, n)), modality_id=1)
    m2 = FeatureMatrix(
        rng.standard_normal((2, n if second_cols is None else second_cols)), modality_id=2
    )
    return FeatureChunk([m1, m2], LabelMatrix(labels), 1, names)


class TestValidateChunk:
    def test_consistent_chunk_passes(self):
        report = validate_chunk(_chunk(), CategoryRegistry())
        assert report.ok and not report.violations

    def test_zero_label_column_reported(self):
        labels = np.array([[1, 0, 1], [0, 0, 1]], dtype=np.uint8)
        report = validate_chunk(_chunk(n=3, labels=labels), CategoryRegistry())
        assert any("unlabeled instance at column 1" in v for v in report.violations)

    def test_column_mismatch_reported(self):
        report = validate_chunk(_chunk(n=5, second_cols=4), CategoryRegistry())
        assert any("column count mismatch" in v for v in report.violations)

    def test_missing_registered_category_reported(self):
        reg = CategoryRegistry()
        reg.register(["zebra"], round_=1)
        report = validate_chunk(_chunk(), reg)
        assert any("not matching registry" in v for v in report.violations)


class TestDataset:
    def test_directory_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        labels = np.zeros((2, 6), dtype=np.uint8)
        labels[rng.integers(0, 2, size=6), np.arange(6)] = 1
        ds = Dataset(
            [
                FeatureMatrix(rng.standard_normal((4, 6)), 1),
                FeatureMatrix(rng.standard_normal((3, 6)), 2),
            ],
            LabelMatrix(labels),
            ["cat", "dog"],
        )
        ds.save(tmp_path / "ds")
        back = Dataset.load(tmp_path / "ds")
        assert back.categories == ("cat", "dog")
        for a, b in zip(ds.modalities, back.modalities):
            assert a.values.tobytes() == b.values.tobytes()
        assert np.array_equal(ds.labels.values, back.labels.values)
