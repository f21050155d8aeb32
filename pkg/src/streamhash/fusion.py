"""Per-instance modality fusion weights and fused query encoding.

An auxiliary projection U per modality is fitted to the residual the ridge
regularizer leaves between codes and projected features:

    min_U ||B - W X - U^T X||_F^2 (old and new chunks) + delta ||U||_F^2.

At query time, h_m = column sums of |U_m^T X_qm| scores how badly modality m
quantizes each query; weights z_m = h_max - h_m shift the worst-scoring
instance-modality to exactly zero. Fused codes are the sign of the
weight-scaled sum of per-modality projections.

Weights are defined over the whole query batch: h_max is a batch maximum, so
a single query's code can depend on what else is in its batch. That is the
defined semantics, not an accident.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import sign_quantize
from .hash_functions import _solve_spd


@dataclass(frozen=True, eq=False)
class QueryBatch:
    """Out-of-sample queries, one FeatureMatrix per modality."""

    modalities: tuple

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        if not self.modalities:
            raise ValueError("query batch needs at least one modality")
        counts = {fm.count for fm in self.modalities}
        if len(counts) != 1:
            raise ValueError("query modalities have differing column counts")
        if self.modalities[0].count < 1:
            raise ValueError("query batch is empty")

    @property
    def count(self):
        return self.modalities[0].count

    @property
    def modality_count(self):
        return len(self.modalities)


@dataclass(frozen=True, eq=False)
class WeightVectors:
    """Non-negative per-instance weights, one row vector per modality."""

    z: tuple
    h_max: float

    def __post_init__(self):
        object.__setattr__(
            self, "z", tuple(np.asarray(v, dtype=np.float64) for v in self.z)
        )
        if any((v < 0).any() for v in self.z):
            raise ValueError("fusion weights must be non-negative")


def solve_auxiliary(stats, w_m, delta):
    """Auxiliary projection U = (D2 + delta I)^-1 (D3 - D2 W^T).

    The regularizer on U is delta, matching the loss that defines it; at the
    defaults delta == theta the two coincide.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if w_m.shape != (stats.bits, stats.dim):
        raise ValueError("projection shape does not match statistics")
    gram = stats.d2 + delta * np.eye(stats.dim)
    rhs = stats.d3 - stats.d2 @ w_m.T
    return _solve_spd(gram, rhs, "auxiliary projection solve")


def compute_weights(auxiliaries, queries, weight_floor=0.0):
    """Quantization-error weights for every (instance, modality) pair.

    h_m[j] = sum_i |(U_m^T X_qm)[i, j]|; z_m = h_max - h_m with h_max the
    maximum over all modalities and queries in the batch. The globally worst
    pair gets weight exactly 0 (plus ``weight_floor`` if configured).
    """
    if queries.modality_count < 2:
        raise ValueError("fine-grained weights need at least 2 modalities")
    if len(auxiliaries) != queries.modality_count:
        raise ValueError("one auxiliary projection per modality required")
    if weight_floor < 0:
        raise ValueError("weight_floor must be non-negative")
    h = [
        np.abs(u.T @ fm.values).sum(axis=0)
        for u, fm in zip(auxiliaries, queries.modalities)
    ]
    h_max = float(max(v.max() for v in h))
    z = [h_max - v + weight_floor for v in h]
    return WeightVectors(tuple(z), h_max)


def uniform_weights(modality_count, query_count):
    """All-ones weights; used by the no-fine-grained ablation."""
    return WeightVectors(
        tuple(np.ones(query_count) for _ in range(modality_count)), h_max=0.0
    )


def encode_queries(projections, weights, queries):
    """Fused query codes: sign of the weighted sum of modality projections.

    Query j's contribution from modality m is scaled by the scalar z_m[j];
    positive rescaling of all weights never changes the codes.
    """
    if not (len(projections) == len(weights.z) == queries.modality_count):
        raise ValueError("projections, weights, and queries must align per modality")
    fused = None
    for w_m, z_m, fm in zip(projections, weights.z, queries.modalities):
        if z_m.shape != (queries.count,):
            raise ValueError("weight vector length does not match query count")
        term = (w_m @ fm.values) * z_m[np.newaxis, :]
        fused = term if fused is None else fused + term
    return sign_quantize(fused)
