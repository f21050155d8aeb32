"""Shared independent oracles for the test suite.

These deliberately avoid the library's own code paths: ridge solves go
through numpy's SVD-based lstsq on augmented systems, and MAP is a plain
double loop over the ranking definition.
"""

import math

import numpy as np


def ridge_fit_oracle(x, b, reg):
    """W minimizing ||B - W X||_F^2 + reg ||W||_F^2 via augmented lstsq."""
    d = x.shape[0]
    aug = np.vstack([x.T, np.sqrt(reg) * np.eye(d)])
    target = np.vstack([b.T, np.zeros((d, b.shape[0]))])
    w_t, *_ = np.linalg.lstsq(aug, target, rcond=None)
    return w_t.T


def auxiliary_fit_oracle(x, b, w, reg):
    """U minimizing ||B - W X - U^T X||_F^2 + reg ||U||_F^2, W fixed."""
    residual = b - w @ x
    return ridge_fit_oracle(x, residual, reg).T


def wc_fit_oracle(b, k, ridge):
    """Wc minimizing ||K - Wc^T B||_F^2 + ridge ||Wc||_F^2 via lstsq."""
    r = b.shape[0]
    aug = np.vstack([b.T, np.sqrt(ridge) * np.eye(r)]) if ridge > 0 else b.T
    target = np.vstack([k.T, np.zeros((r, k.shape[0]))]) if ridge > 0 else k.T
    w_c, *_ = np.linalg.lstsq(aug, target, rcond=None)
    return w_c


def code_fit_objective(w_c, b_new, k_new):
    """||K_new - Wc^T B_new||_F^2, the only term that moves under row flips."""
    residual = k_new - w_c.T @ b_new.astype(np.float64)
    return float(np.sum(residual * residual))


def naive_hamming(a, b):
    return int(np.sum(np.asarray(a) != np.asarray(b)))


def naive_average_precision(rel_sequence):
    """AP of a 0/1 relevance sequence in rank order; None when no hit."""
    hits = 0
    terms = []
    for rank, rel in enumerate(rel_sequence, start=1):
        if rel:
            hits += 1
            terms.append(hits / rank)
    return None if hits == 0 else math.fsum(terms) / hits


def naive_map(query_codes, db_codes, query_labels, db_labels, cutoff=None):
    """Double-loop MAP with the deterministic ascending-index tie-break."""
    q = np.asarray(query_codes)
    d = np.asarray(db_codes)
    ql = np.asarray(query_labels)
    dl = np.asarray(db_labels)
    rows = max(ql.shape[0], dl.shape[0])
    ql = np.pad(ql, ((0, rows - ql.shape[0]), (0, 0)))
    dl = np.pad(dl, ((0, rows - dl.shape[0]), (0, 0)))
    n_db = d.shape[1]
    limit = n_db if cutoff is None else cutoff
    aps = []
    for qi in range(q.shape[1]):
        scored = sorted(
            (naive_hamming(q[:, qi], d[:, i]), i) for i in range(n_db)
        )
        rels = []
        for _, i in scored[:limit]:
            shared = any(ql[c, qi] and dl[c, i] for c in range(rows))
            rels.append(1 if shared else 0)
        ap = naive_average_precision(rels)
        if ap is not None:
            aps.append(ap)
    if not aps:
        raise ValueError("no evaluable query")
    return math.fsum(aps) / len(aps)
