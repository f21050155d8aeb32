"""Hamming-distance ranking and retrieval metrics.

The semantics are the exact brute-force definitions: rank the whole database
by Hamming distance (ties broken by ascending database index), count an item
as relevant when it shares at least one label with the query, and average
precision over the relevant ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class RankingResult:
    """Per-query database permutation plus the distances along it."""

    order: np.ndarray
    distances: np.ndarray

    @property
    def query_count(self):
        return self.order.shape[0]

    @property
    def database_count(self):
        return self.order.shape[1]


def hamming_distances(queries, database):
    """Integer n_q x N matrix of bit disagreements, via (r - bq^T bi) / 2."""
    if queries.bits != database.bits:
        raise ValueError(
            f"code lengths differ: queries {queries.bits}, database {database.bits}"
        )
    q = queries.values.astype(np.int32)
    d = database.values.astype(np.int32)
    return (queries.bits - q.T @ d) // 2


def rank_by_hamming(queries, database):
    """Rank every database item per query: ascending distance, ties by index."""
    dist = hamming_distances(queries, database)
    order = np.argsort(dist, axis=1, kind="stable")
    return RankingResult(order, np.take_along_axis(dist, order, axis=1))


def _pad_labels(a, b):
    rows = max(a.shape[0], b.shape[0])
    a = np.pad(a, ((0, rows - a.shape[0]), (0, 0)))
    b = np.pad(b, ((0, rows - b.shape[0]), (0, 0)))
    return a, b


def _relevance(query_labels, db_labels):
    q, d = _pad_labels(query_labels.values, db_labels.values)
    return (q.astype(np.int32).T @ d.astype(np.int32)) > 0


def mean_average_precision(ranking, query_labels, db_labels, cutoff=None):
    """Mean of per-query average precision over the Hamming ranking.

    AP sums precision at each relevant rank up to ``cutoff`` (default: the
    whole database) and divides by the number of relevant items found there.
    Queries with no relevant item are excluded from the mean; if no query
    has one, that is an error.
    """
    n_db = ranking.database_count
    if n_db == 0:
        raise ValueError("empty database")
    limit = n_db if cutoff is None else int(cutoff)
    if not 1 <= limit <= n_db:
        raise ValueError(f"cutoff {cutoff} out of range 1..{n_db}")
    relevant = _relevance(query_labels, db_labels)
    aps = []
    for q in range(ranking.query_count):
        rel = relevant[q, ranking.order[q, :limit]]
        hits = int(rel.sum())
        if hits == 0:
            continue
        cum = np.cumsum(rel)
        precision = cum[rel] / (np.flatnonzero(rel) + 1)
        # fsum keeps the mean exact, independent of summation order
        aps.append(math.fsum(precision) / hits)
    if not aps:
        raise ValueError("no evaluable query: no query has any relevant item")
    return math.fsum(aps) / len(aps)


def precision_at_k(ranking, query_labels, db_labels, k):
    """Mean over queries of the fraction of relevant items in the top k."""
    if not 1 <= k <= ranking.database_count:
        raise ValueError(f"k {k} out of range 1..{ranking.database_count}")
    relevant = _relevance(query_labels, db_labels)
    top = np.take_along_axis(relevant, ranking.order[:, :k], axis=1)
    return float(top.sum(axis=1).mean() / k)
