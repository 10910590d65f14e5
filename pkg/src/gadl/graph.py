"""Undirected graphs, spectral filter matrices and benchmark graph generation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised for malformed edge-list input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _canonical_edges(edges, n: int) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.min() < 0 or arr.max() >= n:
        raise ValueError(f"edge index out of range [0, {n})")
    if np.any(arr[:, 0] == arr[:, 1]):
        raise ValueError("self-loops are not allowed")
    arr = np.sort(arr, axis=1)
    return np.unique(arr, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with optional dense node features.

    ``edges`` is stored canonically: one row ``(u, v)`` per edge with ``u < v``,
    rows sorted lexicographically. Arrays are made read-only.
    """

    n: int
    edges: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("a graph needs at least one node")
        object.__setattr__(self, "n", int(self.n))
        edges = _canonical_edges(self.edges, self.n)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        if self.features is not None:
            x = np.array(self.features, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[0] != self.n:
                raise ValueError(f"feature rows ({x.shape[0]}) != node count ({self.n})")
            x.setflags(write=False)
            object.__setattr__(self, "features", x)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.n_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def with_features(self, features: Optional[np.ndarray]) -> "Graph":
        return Graph(self.n, self.edges, features)


@dataclass(frozen=True, eq=False)
class FilterPair:
    """Symmetric-normalised low-pass and high-pass propagation matrices."""

    a_low_sym: np.ndarray
    a_high_sym: np.ndarray

    @property
    def a_gcn_sym(self) -> np.ndarray:
        # I - L = (I - L/2) - L/2
        return self.a_low_sym - self.a_high_sym


@dataclass(frozen=True)
class PerturbationSpec:
    p: float
    seed: int
    mode: str = "mixed"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"perturbation level must lie in [0, 1], got {self.p}")
        if self.mode not in ("mixed", "delete-only"):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")

    def n_modifications(self, n_edges: int) -> int:
        # round() guards against 0.29 * 100 = 28.999999999999996
        return int(math.floor(round(self.p * n_edges, 9)))


def load_edge_list(path, n_hint: int | None = None) -> Graph:
    """Read a whitespace-separated ``u v`` edge list; ``#`` starts a comment line."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise GraphFormatError(f"expected two node indices, got {line!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer node index in {line!r}", lineno) from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"negative node index in {line!r}", lineno)
            if u == v:
                raise GraphFormatError(f"self-loop on node {u}", lineno)
            pairs.append((u, v))
    n = max((max(p) for p in pairs), default=-1) + 1
    if n_hint is not None:
        n = max(n, int(n_hint))
    if n < 1:
        raise GraphFormatError(f"{Path(path).name}: no edges and no node count hint")
    return Graph(n, pairs)


def _normalized_adjacency(g: Graph) -> np.ndarray:
    """D̃^{-1/2} Ã D̃^{-1/2} with Ã = A + I; exactly symmetric."""
    a_tilde = g.adjacency() + np.eye(g.n)
    dinv = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * np.outer(dinv, dinv)


def filter_matrices(g: Graph) -> FilterPair:
    """Low-pass ``I - L̃/2`` and high-pass ``L̃/2`` filters of a graph.

    Both follow from ``D̃^{-1/2} (Ã ± D̃)/2 D̃^{-1/2}``; the self-loop keeps
    every degree positive, so isolated nodes need no special case.
    """
    s = _normalized_adjacency(g)
    eye = np.eye(g.n)
    return FilterPair(a_low_sym=0.5 * (eye + s), a_high_sym=0.5 * (eye - s))


def normalized_laplacian(g: Graph) -> np.ndarray:
    """Self-loop normalised Laplacian ``I - D̃^{-1/2} Ã D̃^{-1/2}``."""
    return np.eye(g.n) - _normalized_adjacency(g)


def _sample_absent_pairs(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    n = g.n
    total_absent = n * (n - 1) // 2 - g.n_edges
    if count > total_absent:
        logger.warning("only %d absent pairs available, %d additions requested", total_absent, count)
        count = total_absent
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    taken = set(map(tuple, g.edges.tolist()))
    out = []
    # rejection sampling stays cheap while the graph is sparse
    if total_absent > 4 * count:
        while len(out) < count:
            u, v = rng.integers(0, n, size=2)
            if u == v:
                continue
            pair = (int(min(u, v)), int(max(u, v)))
            if pair in taken:
                continue
            taken.add(pair)
            out.append(pair)
        return np.array(out, dtype=np.int64)
    iu, ju = np.triu_indices(n, k=1)
    absent = g.adjacency()[iu, ju] == 0
    cand = np.stack([iu[absent], ju[absent]], axis=1)
    pick = rng.choice(len(cand), size=count, replace=False)
    return cand[np.sort(pick)]


def perturb_and_permute(g: Graph, spec: PerturbationSpec) -> tuple[Graph, np.ndarray]:
    """Build a benchmark target ``P (A + M) Pᵀ``.

    ``floor(p |E|)`` modifications are applied: in ``mixed`` mode half of them
    (rounded up) delete existing edges and the rest add absent pairs; in
    ``delete-only`` mode all of them delete. Nodes are then relabelled by a
    uniform random permutation. Returns the target graph and ``perm`` with
    ``perm[i]`` the target index of source node ``i``.
    """
    rng = np.random.default_rng(spec.seed)
    m = spec.n_modifications(g.n_edges)
    if spec.mode == "delete-only":
        n_del, n_add = m, 0
    else:
        n_del, n_add = (m + 1) // 2, m // 2
    n_del = min(n_del, g.n_edges)

    keep = np.ones(g.n_edges, dtype=bool)
    if n_del:
        keep[rng.choice(g.n_edges, size=n_del, replace=False)] = False
    added = _sample_absent_pairs(g, n_add, rng)
    if n_add and len(added) < n_add:
        logger.info("graph is (nearly) complete: %d of %d additions skipped", n_add - len(added), n_add)
    edges = np.concatenate([g.edges[keep], added], axis=0)

    perm = rng.permutation(g.n)
    features = None
    if g.features is not None:
        features = np.empty_like(g.features)
        features[perm] = g.features
    return Graph(g.n, perm[edges], features), perm


def netsimile_features(g: Graph, normalize: bool = True) -> np.ndarray:
    """Seven structural descriptors per node.

    Columns: degree, clustering coefficient, mean neighbour degree, mean
    neighbour clustering, edges inside the closed ego-network, edges leaving
    it, and distinct nodes adjacent to it. With ``normalize`` each column is
    z-scored (zero-variance columns become 0).
    """
    a = g.adjacency()
    deg = a.sum(axis=1)
    a2 = a @ a
    tri = 0.5 * (a2 * a).sum(axis=1)
    pairs = deg * (deg - 1)
    clust = np.divide(2.0 * tri, pairs, out=np.zeros(g.n), where=pairs > 0)
    has_nb = deg > 0
    nb_deg = np.divide(a @ deg, deg, out=np.zeros(g.n), where=has_nb)
    nb_clust = np.divide(a @ clust, deg, out=np.zeros(g.n), where=has_nb)
    ego_edges = deg + tri
    ego_out = a @ deg - deg - 2.0 * tri
    reach = (a2 > 0) & (a == 0)
    np.fill_diagonal(reach, False)
    ego_nbrs = reach.sum(axis=1).astype(np.float64)

    feats = np.stack([deg, clust, nb_deg, nb_clust, ego_edges, ego_out, ego_nbrs], axis=1)
    if normalize:
        feats = zscore_columns(feats)
    return feats


def zscore_columns(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    centered = x - mu
    return np.divide(centered, sd, out=np.zeros_like(centered), where=sd > 1e-12)


def knn_graph(embeddings: np.ndarray, k: int) -> Graph:
    """Symmetrised cosine k-nearest-neighbour graph; the embeddings become features.

    Ties in similarity go to the lower row index.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    m = x.shape[0]
    if k < 1 or k >= m:
        raise ValueError(f"k must satisfy 1 <= k < {m} (number of rows), got {k}")
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"row {zero[0]} is all zeros; cosine similarity undefined")
    u = x / norms[:, None]
    sim = u @ u.T
    np.fill_diagonal(sim, -np.inf)
    nbrs = np.argsort(-sim, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(m), k)
    return Graph(m, np.stack([rows, nbrs.ravel()], axis=1), x)


def class_mean_rows(vectors: np.ndarray, labels) -> np.ndarray:
    """Mean row per distinct label, in sorted label order."""
    x = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    if x.shape[0] == 0:
        raise ValueError("no rows to average")
    if labels.shape[0] != x.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {x.shape[0]} rows")
    classes, inverse = np.unique(labels, return_inverse=True)
    sums = np.zeros((len(classes), x.shape[1]))
    np.add.at(sums, inverse, x)
    counts = np.bincount(inverse, minlength=len(classes))
    return sums / counts[:, None]
