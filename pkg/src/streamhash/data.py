"""Core data types and bit-exact file formats for chunked multi-modal datasets.

Matrices are stored column-per-instance: a feature matrix is d x n, a label
matrix is c x n with {0,1} entries, a code matrix is r x n with {-1,+1}
entries. File formats are row-major with explicit dimensions so orientation
is never ambiguous, and they round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sII")

FMAT_MAGIC = b"FMT1"
LMAT_MAGIC = b"LMT1"
IMAT_MAGIC = b"IMT1"


class FormatError(ValueError):
    """Malformed matrix file; ``offset`` is the offending byte position."""

    def __init__(self, message, offset, path=None):
        prefix = f"{path}: " if path is not None else ""
        super().__init__(f"{prefix}{message} (byte offset {offset})")
        self.offset = offset
        self.path = None if path is None else str(path)


def _read_payload(path, magic, dtype):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", offset=len(data), path=path)
    got, rows, cols = _HEADER.unpack_from(data, 0)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", offset=0, path=path)
    itemsize = np.dtype(dtype).itemsize
    expected = _HEADER.size + rows * cols * itemsize
    if len(data) < expected:
        raise FormatError(
            f"truncated payload, expected {expected} bytes", offset=len(data), path=path
        )
    if len(data) > expected:
        raise FormatError("trailing bytes after payload", offset=expected, path=path)
    values = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=_HEADER.size)
    return values.reshape(rows, cols).copy()


def _first_bad_offset(flat_bad, itemsize):
    idx = int(np.flatnonzero(flat_bad)[0])
    return _HEADER.size + idx * itemsize


def read_fmat(path):
    """Read an FMAT file (f64 little-endian, row-major) as a d x n array."""
    values = _read_payload(path, FMAT_MAGIC, np.dtype("<f8"))
    finite = np.isfinite(values)
    if not finite.all():
        raise FormatError(
            "non-finite entry", offset=_first_bad_offset(~finite.ravel(), 8), path=path
        )
    return values.astype(np.float64)


def write_fmat(path, values):
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("FMAT payload must be a 2-D matrix")
    if not np.isfinite(values).all():
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FMAT_MAGIC, values.shape[0], values.shape[1]))
        fh.write(values.tobytes(order="C"))


def read_lmat(path):
    """Read an LMAT file (u8, row-major) as a c x n {0,1} array."""
    values = _read_payload(path, LMAT_MAGIC, np.uint8)
    bad = values > 1
    if bad.any():
        raise FormatError(
            "label entry not in {0,1}", offset=_first_bad_offset(bad.ravel(), 1), path=path
        )
    return values


def write_lmat(path, values):
    values = np.ascontiguousarray(values, dtype=np.uint8)
    if values.ndim != 2 or (values > 1).any():
        raise ValueError("LMAT payload must be a 2-D {0,1} matrix")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(LMAT_MAGIC, values.shape[0], values.shape[1]))
        fh.write(values.tobytes(order="C"))


def read_imat(path):
    """Read an IMAT file (i8, row-major) as an r x n {-1,+1} array."""
    values = _read_payload(path, IMAT_MAGIC, np.int8)
    bad = np.abs(values.astype(np.int16)) != 1
    if bad.any():
        raise FormatError(
            "code entry not in {-1,+1}", offset=_first_bad_offset(bad.ravel(), 1), path=path
        )
    return values


def write_imat(path, values):
    values = np.ascontiguousarray(values, dtype=np.int8)
    if values.ndim != 2 or (np.abs(values.astype(np.int16)) != 1).any():
        raise ValueError("IMAT payload must be a 2-D {-1,+1} matrix")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(IMAT_MAGIC, values.shape[0], values.shape[1]))
        fh.write(values.tobytes(order="C"))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Real feature matrix, d rows x n columns, one column per instance."""

    values: np.ndarray
    modality_id: int = 1

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        if v.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if v.shape[0] < 1:
            raise ValueError("feature matrix needs at least one row")
        if not np.isfinite(v).all():
            raise ValueError("feature matrix contains non-finite entries")
        if self.modality_id < 1:
            raise ValueError("modality_id starts at 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.values.shape[0]

    @property
    def count(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Binary label matrix, c rows x n columns, entries in {0,1}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, order="C")
        if v.ndim != 2:
            raise ValueError("label matrix must be 2-D")
        if v.size and not np.isin(v, (0, 1)).all():
            raise ValueError("label entries must be exactly 0 or 1")
        v = v.astype(np.uint8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def category_count(self):
        return self.values.shape[0]

    @property
    def count(self):
        return self.values.shape[1]

    def unlabeled_columns(self):
        """Indices of columns with no label set."""
        if self.values.shape[1] == 0:
            return np.empty(0, dtype=np.intp)
        return np.flatnonzero(self.values.sum(axis=0) == 0)


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """Binary code matrix, r bits x n columns, entries in {-1,+1}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, order="C")
        if v.ndim != 2:
            raise ValueError("code matrix must be 2-D")
        if v.size and not np.isin(v, (-1, 1)).all():
            raise ValueError("code entries must be exactly -1 or +1")
        v = v.astype(np.int8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def bits(self):
        return self.values.shape[0]

    @property
    def count(self):
        return self.values.shape[1]


def sign_quantize(values):
    """Elementwise sign with the fixed convention sign(0) = +1.

    Entries must be finite; returns a CodeMatrix.
    """
    v = np.asarray(values, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValueError("cannot quantize non-finite values")
    return CodeMatrix(np.where(v < 0, -1, 1).astype(np.int8))


class CategoryRegistry:
    """Append-only registry mapping category names to stable row indices.

    A category's index is assigned when first registered and never changes;
    old categories are never reordered or removed.
    """

    def __init__(self, names=(), first_seen_round=()):
        names = list(names)
        rounds = list(first_seen_round)
        if len(names) != len(rounds):
            raise ValueError("names and first_seen_round lengths differ")
        if len(set(names)) != len(names):
            raise ValueError("duplicate category names")
        self._names = names
        self._rounds = [int(t) for t in rounds]
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self):
        return len(self._names)

    def __contains__(self, name):
        return name in self._index

    @property
    def names(self):
        return tuple(self._names)

    @property
    def first_seen_rounds(self):
        return tuple(self._rounds)

    def index_of(self, name):
        return self._index[name]

    def old_count(self, round_):
        """Number of categories first seen before ``round_``."""
        return sum(1 for t in self._rounds if t < round_)

    def new_count(self, round_):
        """Number of categories first seen exactly at ``round_``."""
        return sum(1 for t in self._rounds if t == round_)

    def register(self, names, round_):
        """Append unseen names in order; returns their assigned indices.

        Raises on a name that is already registered.
        """
        assigned = []
        for name in names:
            if not name or not name.strip():
                raise ValueError("blank category name")
            if name in self._index:
                raise ValueError(f"category {name!r} already registered")
            self._index[name] = len(self._names)
            self._names.append(name)
            self._rounds.append(int(round_))
            assigned.append(self._index[name])
        return assigned

    def copy(self):
        return CategoryRegistry(self._names, self._rounds)


@dataclass(frozen=True, eq=False)
class FeatureChunk:
    """One round's arrival: per-modality features plus labels.

    ``category_names[i]`` names label row i; the trainer uses it to detect
    new categories and to align rows with the registry order.
    """

    modalities: tuple
    labels: LabelMatrix
    round: int
    category_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "category_names", tuple(self.category_names))

    @property
    def count(self):
        return self.labels.count

    @property
    def modality_count(self):
        return len(self.modalities)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_chunk; empty ``violations`` means consistent."""

    violations: tuple

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_chunk(chunk, registry):
    """Report-based consistency check of a chunk against a registry.

    Never raises; collects human-readable violations instead.
    """
    problems = []
    counts = {fm.modality_id: fm.count for fm in chunk.modalities}
    if len(set(counts.values()) | {chunk.labels.count}) > 1:
        per_mod = ", ".join(f"modality {m}: {n}" for m, n in counts.items())
        problems.append(
            f"column count mismatch ({per_mod}, labels: {chunk.labels.count})"
        )
    ids = [fm.modality_id for fm in chunk.modalities]
    if ids != list(range(1, len(ids) + 1)):
        problems.append(f"modality ids not consecutive from 1: {ids}")
    for j in chunk.labels.unlabeled_columns():
        problems.append(f"unlabeled instance at column {j}")
    names = chunk.category_names
    if len(set(names)) != len(names):
        problems.append("duplicate category names in chunk")
    if any(not n or not n.strip() for n in names):
        problems.append("blank category name in chunk")
    if chunk.labels.category_count != len(names):
        problems.append(
            f"label rows ({chunk.labels.category_count}) do not match "
            f"chunk category names ({len(names)})"
        )
    missing = [n for n in registry.names if n not in set(names)]
    if missing:
        problems.append(
            "label rows not matching registry: chunk omits registered "
            f"categories {missing}"
        )
    return ValidationReport(tuple(problems))


def load_feature_matrix(path, modality_id=1):
    """Load an FMAT file as a FeatureMatrix."""
    return FeatureMatrix(read_fmat(path), modality_id=modality_id)


def save_feature_matrix(path, matrix):
    write_fmat(path, matrix.values)


def read_categories(path):
    names = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ValueError(f"{path}: categories file must be a JSON array of strings")
    return names


def write_categories(path, names):
    Path(path).write_text(
        json.dumps(list(names), ensure_ascii=False) + "\n", encoding="utf-8"
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """A dataset directory in memory: modality features, labels, names."""

    modalities: tuple
    labels: LabelMatrix
    categories: tuple

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.labels.category_count != len(self.categories):
            raise ValueError("label rows do not match category names")
        if any(fm.count != self.labels.count for fm in self.modalities):
            raise ValueError("modality column counts do not match labels")

    @property
    def count(self):
        return self.labels.count

    @property
    def modality_count(self):
        return len(self.modalities)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for fm in self.modalities:
            write_fmat(directory / f"modality_{fm.modality_id}.fmat", fm.values)
        write_lmat(directory / "labels.lmat", self.labels.values)
        write_categories(directory / "categories.json", self.categories)

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        paths = sorted(
            directory.glob("modality_*.fmat"),
            key=lambda p: int(p.stem.split("_")[1]),
        )
        if not paths:
            raise FileNotFoundError(f"no modality_*.fmat files in {directory}")
        modalities = [
            FeatureMatrix(read_fmat(p), modality_id=int(p.stem.split("_")[1]))
            for p in paths
        ]
        labels = LabelMatrix(read_lmat(directory / "labels.lmat"))
        categories = read_categories(directory / "categories.json")
        return cls(modalities, labels, categories)
