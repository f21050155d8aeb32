"""RBF anchor kernel mapping.

phi(x)_i = exp(-||x - a_i||^2 / (2 sigma^2)) against anchors a_i sampled
without replacement from the first round's training columns. The map is
fitted once and frozen; later rounds and queries reuse it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import FeatureMatrix

_SIGMA_SAMPLE_LIMIT = 1000


@dataclass(frozen=True, eq=False)
class KernelMap:
    """Frozen anchor set plus kernel width for one source modality."""

    anchors: np.ndarray
    sigma: float
    source_modality: int
    seed: int

    def __post_init__(self):
        a = np.array(self.anchors, dtype=np.float64, order="C")
        if a.ndim != 2 or a.shape[1] < 1:
            raise ValueError("anchors must be a d x m matrix with m >= 1")
        if not np.isfinite(a).all():
            raise ValueError("anchors contain non-finite entries")
        if not self.sigma > 0:
            raise ValueError("kernel width sigma must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "anchors", a)

    @property
    def anchor_count(self):
        return self.anchors.shape[1]


def fit_anchors(features, anchor_count, sigma=None, seed=0):
    """Sample anchors from training columns and fix the kernel width.

    Anchors are ``anchor_count`` distinct columns drawn without replacement
    with the given seed. When ``sigma`` is not given it defaults to the mean
    Euclidean distance between the anchors and a seeded sample of up to 1000
    training columns.
    """
    x = features.values
    n = x.shape[1]
    if anchor_count < 1:
        raise ValueError("anchor_count must be >= 1")
    if anchor_count > n:
        raise ValueError(f"anchor_count {anchor_count} exceeds available columns {n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=anchor_count, replace=False)
    anchors = x[:, idx].copy()
    if sigma is None:
        if n < 2:
            raise ValueError("need at least 2 columns to estimate sigma")
        sample_idx = rng.choice(n, size=min(n, _SIGMA_SAMPLE_LIMIT), replace=False)
        dists = cdist(anchors.T, x[:, sample_idx].T, metric="euclidean")
        sigma = float(dists.mean())
        if sigma == 0.0:
            raise ValueError("all sampled points identical, kernel width is zero")
    return KernelMap(anchors, float(sigma), features.modality_id, int(seed))


def apply_kernel_map(kmap, features):
    """Lift features to anchor similarities: one output row per anchor.

    Output entries lie in (0, 1]; entry (i, j) is 1 exactly when column j
    equals anchor i.
    """
    if features.dim != kmap.anchors.shape[0]:
        raise ValueError(
            f"feature rows {features.dim} do not match anchor rows {kmap.anchors.shape[0]}"
        )
    sq = cdist(kmap.anchors.T, features.values.T, metric="sqeuclidean")
    out = np.exp(-sq / (2.0 * kmap.sigma**2))
    return FeatureMatrix(out, modality_id=features.modality_id)
