"""Closed-form per-modality hash functions over online sufficient statistics.

The ridge regression of codes onto features,

    min_W ||B - W X||_F^2 + theta ||W||_F^2,

has the solution W = D1 (D2 + theta I)^-1 with D1 = B X^T and D2 = X X^T
accumulated across rounds, so each round only adds its own chunk's products
and never revisits old raw data. D3 = X B^T feeds the auxiliary projections
used for fusion weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla


@dataclass(frozen=True, eq=False)
class ModalityStatistics:
    """Running accumulators for one modality.

    d1 is r x d, d2 is d x d (symmetric PSD), d3 is d x r and equals d1^T
    at all times.
    """

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    rounds_absorbed: int = 0

    def __post_init__(self):
        for name in ("d1", "d2", "d3"):
            object.__setattr__(
                self, name, np.array(getattr(self, name), dtype=np.float64, order="C")
            )
        r, d = self.d1.shape
        if self.d2.shape != (d, d) or self.d3.shape != (d, r):
            raise ValueError("statistics shapes are inconsistent")

    @property
    def bits(self):
        return self.d1.shape[0]

    @property
    def dim(self):
        return self.d1.shape[1]

    @classmethod
    def zeros(cls, bits, dim):
        return cls(
            d1=np.zeros((bits, dim)),
            d2=np.zeros((dim, dim)),
            d3=np.zeros((dim, bits)),
            rounds_absorbed=0,
        )


def update_statistics(stats, x_new, b_new):
    """Absorb one chunk: d1 += B X^T, d2 += X X^T, d3 += X B^T.

    Returns fresh statistics; the inputs are not mutated. d3 is updated with
    the exact transpose of d1's increment so d3 == d1.T holds bit-exactly,
    and d2 is re-symmetrized after the add.
    """
    x = x_new.values
    b = b_new.values.astype(np.float64)
    if x.shape[1] != b.shape[1]:
        raise ValueError(
            f"feature columns {x.shape[1]} do not match code columns {b.shape[1]}"
        )
    if x.shape[0] != stats.dim or b.shape[0] != stats.bits:
        raise ValueError("chunk dimensions do not match accumulated statistics")
    cross = b @ x.T
    d1 = stats.d1 + cross
    d2 = stats.d2 + x @ x.T
    d2 = (d2 + d2.T) / 2.0
    d3 = stats.d3 + cross.T
    return ModalityStatistics(d1, d2, d3, stats.rounds_absorbed + 1)


def _solve_spd(gram, rhs, what):
    """Solve gram @ Y = rhs for Y with a Cholesky factorization."""
    try:
        factor = sla.cho_factor(gram, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        cond = float(np.linalg.cond(gram))
        raise ValueError(
            f"{what}: regularized Gram matrix not positive definite "
            f"(condition estimate {cond:.3e})"
        ) from exc
    return sla.cho_solve(factor, rhs, check_finite=False)


def solve_projection(stats, theta):
    """Hash projection W = D1 (D2 + theta I)^-1 for one modality."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    gram = stats.d2 + theta * np.eye(stats.dim)
    return _solve_spd(gram, stats.d1.T, "hash projection solve").T


@dataclass(frozen=True, eq=False)
class HashFunctionState:
    """Per-modality projections, auxiliaries, and statistics."""

    projections: tuple
    auxiliaries: tuple
    stats: tuple
    theta: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "projections", tuple(self.projections))
        object.__setattr__(self, "auxiliaries", tuple(self.auxiliaries))
        object.__setattr__(self, "stats", tuple(self.stats))
        if not (len(self.projections) == len(self.auxiliaries) == len(self.stats)):
            raise ValueError("per-modality lists must have equal length")
        if not (self.theta > 0 and self.delta > 0):
            raise ValueError("theta and delta must be positive")

    @property
    def modality_count(self):
        return len(self.stats)

    @classmethod
    def empty(cls, bits, dims, theta=1.0, delta=1.0):
        return cls(
            projections=[np.zeros((bits, d)) for d in dims],
            auxiliaries=[np.zeros((d, bits)) for d in dims],
            stats=[ModalityStatistics.zeros(bits, d) for d in dims],
            theta=theta,
            delta=delta,
        )
