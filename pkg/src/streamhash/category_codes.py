"""Category-level binary codes learned from semantic supervision.

Each category gets one frozen r-bit code. New categories' codes are learned
by alternating minimization of

    || K_new - Wc^T B_new ||_F^2 + || K_old - Wc^T B_old ||_F^2 + ridge ||Wc||_F^2

over the transformation Wc (closed-form ridge solve) and the new codes B_new
(discrete row-by-row updates). Old codes never change, which is what keeps
instance codes consistent across rounds. Instance codes are the sign of the
sum of the codes of the categories an instance carries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CategoryRegistry, CodeMatrix, sign_quantize
from .semantics import SemanticMatrix

DEFAULT_RIDGE = 1e-6
DEFAULT_ITERATIONS = 5


@dataclass(frozen=True, eq=False)
class HighLevelState:
    """Frozen per-category codes plus the semantics they were learned from."""

    codes: CodeMatrix
    semantics: SemanticMatrix
    w_c: np.ndarray
    registry: CategoryRegistry
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if self.codes.count != self.semantics.category_count:
            raise ValueError("code and semantics column counts differ")
        if self.codes.count != len(self.registry):
            raise ValueError("code columns do not match registry size")
        if not self.ridge >= 0:
            raise ValueError("ridge must be non-negative")
        object.__setattr__(self, "w_c", np.array(self.w_c, dtype=np.float64, order="C"))

    @property
    def bits(self):
        return self.codes.bits

    @classmethod
    def empty(cls, bits, embedding_dim, ridge=DEFAULT_RIDGE):
        return cls(
            codes=CodeMatrix(np.zeros((bits, 0), dtype=np.int8)),
            semantics=SemanticMatrix(np.zeros((embedding_dim, 0))),
            w_c=np.zeros((bits, embedding_dim)),
            registry=CategoryRegistry(),
            ridge=ridge,
        )


def solve_wc(codes_all, semantics_all, ridge):
    """Closed-form transformation: (B B^T + ridge I)^-1 B K^T.

    ``codes_all`` and ``semantics_all`` concatenate old and new categories.
    The ridge term keeps the system invertible when there are fewer
    categories than bits.
    """
    b = codes_all.values.astype(np.float64)
    k = semantics_all.values
    if b.shape[1] != k.shape[1]:
        raise ValueError("code and semantics column counts differ")
    r = b.shape[0]
    gram = b @ b.T + ridge * np.eye(r)
    try:
        return np.linalg.solve(gram, b @ k.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"code Gram matrix singular even with ridge {ridge}") from exc


def _update_row(j, w_c, b_new, k_new):
    q_j = w_c[j] @ k_new
    rest = np.delete(np.arange(w_c.shape[0]), j)
    correction = b_new[rest].T.astype(np.float64) @ (w_c[rest] @ w_c[j])
    return np.where(q_j - correction < 0, -1, 1).astype(np.int8)


def update_bc_row(j, w_c, codes_new, semantics_new):
    """Discrete update of row j of the new codes with all other rows fixed.

    Returns sign(Q_j - B'^T W' Wc_j) where Q = Wc K_new and primes drop row j;
    ties quantize to +1.
    """
    r = w_c.shape[0]
    if not 0 <= j < r:
        raise ValueError(f"row index {j} out of range for {r} bits")
    if codes_new.bits != r:
        raise ValueError("codes and transformation bit counts differ")
    return _update_row(j, w_c, codes_new.values, semantics_new.values)


def reconstruction_objective(w_c, codes, semantics, ridge=0.0):
    """|| K - Wc^T B ||_F^2 plus the ridge penalty when ridge > 0."""
    residual = semantics.values - w_c.T @ codes.values.astype(np.float64)
    value = float(np.sum(residual * residual))
    if ridge > 0:
        value += ridge * float(np.sum(w_c * w_c))
    return value


def objective_value(state, new_semantics, old_semantics):
    """Objective of the high-level code problem at the state's w_c.

    The state's code columns split into old (matching ``old_semantics``)
    followed by new (matching ``new_semantics``).
    """
    c_old = old_semantics.category_count
    c_new = new_semantics.category_count
    if c_old + c_new != state.codes.count:
        raise ValueError("semantics split does not cover all code columns")
    b = state.codes.values.astype(np.float64)
    k_all = np.concatenate([old_semantics.values, new_semantics.values], axis=1)
    residual = k_all - state.w_c.T @ b
    value = float(np.sum(residual * residual))
    if state.ridge > 0:
        value += state.ridge * float(np.sum(state.w_c * state.w_c))
    return value


def alternating_minimize(
    codes_old, semantics_old, codes_new_init, semantics_new, ridge, iterations, tol=0.0
):
    """Alternate the Wc solve and the discrete row updates of the new codes.

    Returns (new codes, w_c, per-iteration objective values). Both steps are
    exact conditional minimizers, so the objective is non-increasing across
    iterations. ``tol`` > 0 stops early when the relative objective change
    drops below it.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    b_old = codes_old.values
    b_new = codes_new_init.values.copy()
    k_old = semantics_old.values
    k_new = semantics_new.values
    r = b_new.shape[0]
    history = []
    w_c = None
    k_mat = SemanticMatrix(np.concatenate([k_old, k_new], axis=1))
    for _ in range(iterations):
        codes_all = CodeMatrix(np.concatenate([b_old, b_new], axis=1))
        w_c = solve_wc(codes_all, k_mat, ridge)
        for j in range(r):
            b_new[j] = _update_row(j, w_c, b_new, k_new)
        codes_all = CodeMatrix(np.concatenate([b_old, b_new], axis=1))
        history.append(reconstruction_objective(w_c, codes_all, k_mat, ridge))
        if tol > 0 and len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if abs(prev - cur) <= tol * max(1.0, abs(prev)):
                break
    return CodeMatrix(b_new), w_c, history


def random_code_init(bits, count, seed):
    """Seeded uniform random {-1,+1} initialization for new category codes."""
    rng = np.random.default_rng(seed)
    return CodeMatrix((rng.integers(0, 2, size=(bits, count)) * 2 - 1).astype(np.int8))


def learn_new_category_codes(
    state,
    new_names,
    new_semantics,
    iterations=DEFAULT_ITERATIONS,
    seed=0,
    tol=0.0,
    round_=None,
):
    """Learn codes for unseen categories and append them to the state.

    Old category codes are bit-identical in the returned state; only the new
    columns are optimized. ``round_`` is recorded as the new categories'
    first-seen round (defaults to one past the latest registered round).
    """
    new_names = list(new_names)
    if not new_names:
        raise ValueError("no new categories to learn")
    if new_semantics.category_count != len(new_names):
        raise ValueError("semantics columns do not match new names")
    if new_semantics.dim != state.semantics.dim:
        raise ValueError(
            f"embedding dimension {new_semantics.dim} does not match state "
            f"dimension {state.semantics.dim}"
        )
    for name in new_names:
        if name in state.registry:
            raise ValueError(f"category {name!r} already registered")
    init = random_code_init(state.bits, len(new_names), seed)
    new_codes, w_c, _ = alternating_minimize(
        state.codes, state.semantics, init, new_semantics, state.ridge, iterations, tol
    )
    registry = state.registry.copy()
    if round_ is None:
        round_ = _next_round(state.registry)
    registry.register(new_names, round_=round_)
    return HighLevelState(
        codes=CodeMatrix(
            np.concatenate([state.codes.values, new_codes.values], axis=1)
        ),
        semantics=SemanticMatrix(
            np.concatenate([state.semantics.values, new_semantics.values], axis=1),
            provider_id=new_semantics.provider_id,
        ),
        w_c=w_c,
        registry=registry,
        ridge=state.ridge,
    )


def _next_round(registry):
    rounds = registry.first_seen_rounds
    return (max(rounds) + 1) if rounds else 1


def generate_instance_codes(state, labels):
    """Instance code = sign of the sum of its categories' high-level codes.

    Every label column must set at least one category.
    """
    if labels.category_count != len(state.registry):
        raise ValueError(
            f"label rows ({labels.category_count}) do not match registry "
            f"size ({len(state.registry)})"
        )
    bad = labels.unlabeled_columns()
    if bad.size:
        raise ValueError(f"unlabeled instance at column {int(bad[0])}")
    summed = state.codes.values.astype(np.int32) @ labels.values.astype(np.int32)
    return sign_quantize(summed)
