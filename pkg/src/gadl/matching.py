"""Cosine similarity, greedy one-to-one matching, and Acc / Hit@k."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10, 50)


@dataclass
class AlignmentResult:
    matching: list[tuple[int, int]]
    similarity: np.ndarray
    acc: float
    hit_at_k: dict[int, float] = field(default_factory=dict)


def cosine_similarity(z_s: np.ndarray, z_t: np.ndarray) -> np.ndarray:
    z_s = np.asarray(z_s, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_s.shape[1] != z_t.shape[1]:
        raise ValueError(f"embedding widths differ: {z_s.shape[1]} vs {z_t.shape[1]}")

    def unit(z, side):
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        zero = norms[:, 0] == 0
        if zero.any():
            logger.warning("%d zero %s embeddings; their similarities are 0", int(zero.sum()), side)
        return np.divide(z, norms, out=np.zeros_like(z), where=norms > 0)

    s = unit(z_s, "source") @ unit(z_t, "target").T
    return np.clip(s, -1.0, 1.0)


def greedy_match(s: np.ndarray) -> list[tuple[int, int]]:
    """Commit the largest remaining entry whose row and column are both free.

    Equivalent to repeatedly taking the global maximum of the unmatched
    sub-matrix: entries are visited in descending order (ties by lower source
    index, then lower target index) and skipped when their row or column is
    already used. ``O(nm log nm)``.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        return []
    if not np.all(np.isfinite(s)):
        raise ValueError("similarity matrix has non-finite entries")
    n, m = s.shape
    flat = s.ravel()
    idx = np.arange(flat.size)
    # lexsort: last key is primary; flat index order encodes (row, col)
    order = np.lexsort((idx, -flat))
    rows_used = np.zeros(n, dtype=bool)
    cols_used = np.zeros(m, dtype=bool)
    out = []
    limit = min(n, m)
    for f in order:
        i, j = divmod(int(f), m)
        if rows_used[i] or cols_used[j]:
            continue
        rows_used[i] = cols_used[j] = True
        out.append((i, j))
        if len(out) == limit:
            break
    return out


def accuracy(matching: Sequence[tuple[int, int]], ground_truth: Mapping[int, int]) -> float:
    """Fraction of ground-truth pairs reproduced by ``matching``."""
    if not ground_truth:
        raise ValueError("ground truth is empty")
    hits = sum(1 for s, t in matching if ground_truth.get(s) == t)
    return hits / len(ground_truth)


def true_ranks(s: np.ndarray, ground_truth: Mapping[int, int]) -> np.ndarray:
    """1-based rank of each true target in its source row (ties: lower index first)."""
    ranks = np.empty(len(ground_truth), dtype=np.int64)
    for n, (src, tgt) in enumerate(ground_truth.items()):
        row = s[src]
        v = row[tgt]
        ranks[n] = 1 + np.count_nonzero(row > v) + np.count_nonzero(row[:tgt] == v)
    return ranks


def hit_at_k(s: np.ndarray, ground_truth: Mapping[int, int], ks: Sequence[int] = DEFAULT_KS) -> dict[int, float]:
    if not ground_truth:
        raise ValueError("ground truth is empty")
    ranks = true_ranks(np.asarray(s, dtype=np.float64), ground_truth)
    return {int(k): float(np.mean(ranks <= k)) for k in ks}


def align(z_s: np.ndarray, z_t: np.ndarray, ground_truth: Mapping[int, int],
          ks: Sequence[int] = DEFAULT_KS) -> AlignmentResult:
    s = cosine_similarity(z_s, z_t)
    matching = greedy_match(s)
    return AlignmentResult(matching, s, accuracy(matching, ground_truth), hit_at_k(s, ground_truth, ks))
