"""Per-category supervision vectors from pluggable embedding providers.

Three providers are implemented: word vectors loaded from a text file,
deterministic hash-seeded pseudo-embeddings (hermetic test substitute for
real word vectors), and rows of a Sylvester Hadamard matrix. Multi-word
category names map to the arithmetic mean of their per-word vectors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_EMBEDDING_DIM = 300
DEFAULT_HADAMARD_DIM = 256


@dataclass(frozen=True, eq=False)
class SemanticMatrix:
    """Real k x c matrix; column j is the supervision vector of category j."""

    values: np.ndarray
    provider_id: str = "unknown"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        if v.ndim != 2:
            raise ValueError("semantic matrix must be 2-D")
        if not np.isfinite(v).all():
            raise ValueError("semantic matrix contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self):
        return self.values.shape[0]

    @property
    def category_count(self):
        return self.values.shape[1]


def sylvester_hadamard(k):
    """The k x k Hadamard matrix by Sylvester doubling, exact integers."""
    if k < 1 or k & (k - 1):
        raise ValueError(f"Hadamard size must be a power of two, got {k}")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < k:
        h = np.block([[h, h], [h, -h]])
    return h


def hadamard_supervision(category_index, k):
    """Row ``category_index`` of the k x k Sylvester Hadamard matrix."""
    if category_index < 0:
        raise ValueError("category index must be non-negative")
    if category_index >= k:
        raise ValueError(
            f"Hadamard rows exhausted: index {category_index} with only {k} rows"
        )
    return sylvester_hadamard(k)[category_index].astype(np.float64)


def pseudo_embedding(name, k, seed):
    """Unit-norm k-vector derived deterministically from hash(name, seed)."""
    if k < 1:
        raise ValueError("embedding dimension must be >= 1")
    digest = hashlib.sha256(f"{seed}\x00{name}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(k)
    norm = np.linalg.norm(v)
    while norm == 0.0:  # vanishing chance, but normalization must not divide by 0
        v = rng.standard_normal(k)
        norm = np.linalg.norm(v)
    return v / norm


def load_word_vectors(path):
    """Load a text word-vector file: one ``word v1 ... vk`` line per word."""
    vocab = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
            if len(vals) != dim or dim == 0:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} vector components, got {len(vals)}"
                )
            vocab[word] = np.array([float(x) for x in vals], dtype=np.float64)
    if not vocab:
        raise ValueError(f"{path}: empty word-vector file")
    return vocab, dim


class FileVectorProvider:
    """Embeds category names by lookup in a word-vector file.

    A word missing from the vocabulary is an error, never a silent fallback.
    """

    def __init__(self, path):
        self.path = str(path)
        self.vocab, self.dim = load_word_vectors(path)
        self.provider_id = f"file:{Path(path).name}"

    def vector(self, name, index):
        words = name.split()
        if not words:
            raise ValueError("blank category name")
        missing = [w for w in words if w not in self.vocab]
        if missing:
            raise KeyError(f"word {missing[0]!r} not in vocabulary {self.path}")
        return np.mean([self.vocab[w] for w in words], axis=0)


class PseudoProvider:
    """Deterministic seeded pseudo-embeddings; hermetic word-vector stand-in."""

    def __init__(self, seed, dim=DEFAULT_EMBEDDING_DIM):
        self.seed = int(seed)
        self.dim = int(dim)
        self.provider_id = f"pseudo:{self.seed}:{self.dim}"

    def vector(self, name, index):
        words = name.split()
        if not words:
            raise ValueError("blank category name")
        return np.mean([pseudo_embedding(w, self.dim, self.seed) for w in words], axis=0)


class HadamardProvider:
    """Supervision from Hadamard rows, assigned by stable category index."""

    def __init__(self, dim=DEFAULT_HADAMARD_DIM):
        self.dim = int(dim)
        self.provider_id = f"hadamard:{self.dim}"
        self._matrix = sylvester_hadamard(self.dim).astype(np.float64)

    def vector(self, name, index):
        if index >= self.dim:
            raise ValueError(
                f"Hadamard rows exhausted: index {index} with only {self.dim} rows"
            )
        return self._matrix[index]


def embed_categories(provider, names, first_index=0):
    """Embed category names into a SemanticMatrix, one column per name.

    ``first_index`` is the registry index of the first name; index-aware
    providers (Hadamard) need it so that embedding [A,B] then [C] yields the
    same columns as embedding [A,B,C] in one call.
    """
    names = list(names)
    if not names:
        raise ValueError("no category names to embed")
    if any(not n or not n.strip() for n in names):
        raise ValueError("blank category name")
    columns = np.column_stack([provider.vector(n, first_index + i) for i, n in enumerate(names)])
    zero = np.flatnonzero(np.abs(columns).sum(axis=0) == 0)
    if zero.size:
        raise ValueError(f"provider produced an all-zero vector for {names[int(zero[0])]!r}")
    return SemanticMatrix(columns, provider_id=provider.provider_id)


def provider_from_spec(spec):
    """Build a provider from a CLI-style spec string.

    Accepted forms: ``file:<path>``, ``pseudo:<seed>``, ``pseudo:<seed>:<k>``,
    ``hadamard``, ``hadamard:<k>``.
    """
    kind, _, rest = spec.partition(":")
    if kind == "file":
        if not rest:
            raise ValueError("file provider needs a path: file:<path>")
        return FileVectorProvider(rest)
    if kind == "pseudo":
        parts = rest.split(":") if rest else ["0"]
        seed = int(parts[0])
        dim = int(parts[1]) if len(parts) > 1 else DEFAULT_EMBEDDING_DIM
        return PseudoProvider(seed, dim)
    if kind == "hadamard":
        dim = int(rest) if rest else DEFAULT_HADAMARD_DIM
        return HadamardProvider(dim)
    raise ValueError(f"unknown supervision spec {spec!r}")
