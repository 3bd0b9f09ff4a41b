"""Pairwise factor graphs, empirical pair statistics, and edge rankings.

Graphs are undirected and simple; every factor couples exactly two binary
variables.  Pair statistics hold one normalized 2x2 table per edge together
with the single-site marginals, and are the raw material every encoding in
this package is built from.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

EPS = 1e-9

__all__ = [
    "EPS",
    "FactorGraph",
    "PairwiseStats",
    "EdgeRanking",
    "clamp_probs",
    "validate_stats",
    "subset_stats",
    "pruning_score",
    "prune",
    "wst_edge_fractions",
    "sort_edges",
    "write_stats_csv",
    "read_stats_csv",
]


def clamp_probs(p, eps=EPS):
    """Clamp probabilities into [eps, 1 - eps] before logs or ratios."""
    return np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)


def _canonical_edges(edges):
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size == 0:
        return edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ValueError("edges must be an (E, 2) array")
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    out = np.stack([lo, hi], axis=1)
    order = np.lexsort((out[:, 1], out[:, 0]))
    return out[order]


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


@dataclass(frozen=True)
class FactorGraph:
    """Undirected pairwise graph on ``n_vars`` binary variables.

    ``edges`` is an (E, 2) int array with edges[k, 0] < edges[k, 1], sorted
    lexicographically and free of duplicates and self loops.
    """

    n_vars: int
    edges: np.ndarray

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("n_vars must be positive")
        edges = _canonical_edges(self.edges)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n_vars:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self loops are not allowed")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise ValueError("duplicate edges")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def n_edges(self):
        return len(self.edges)

    def degrees(self):
        """Per-variable degree as an (n_vars,) int array."""
        return np.bincount(self.edges.ravel(), minlength=self.n_vars)

    def is_connected(self):
        if self.n_vars == 1:
            return True
        uf = _UnionFind(self.n_vars)
        n_comp = self.n_vars
        for i, j in self.edges:
            if uf.union(int(i), int(j)):
                n_comp -= 1
        return n_comp == 1

    @classmethod
    def complete(cls, n_vars):
        iu = np.triu_indices(n_vars, k=1)
        return cls(n_vars, np.stack(iu, axis=1))

    def edge_index(self):
        """Dict mapping (i, j) with i < j to the edge's row index."""
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}


@dataclass(frozen=True)
class PairwiseStats:
    """Single-site and pairwise marginal tables.

    Attributes:
        singles: (N, 2) array, singles[i, x] = p_i(x).
        edges: (E, 2) int array of the pairs carrying a table.
        pairs: (E, 2, 2) array, pairs[k, x_i, x_j] = p_ij(x_i, x_j) for
            edge k = (i, j) with i < j.
    """

    singles: np.ndarray
    edges: np.ndarray
    pairs: np.ndarray

    def __post_init__(self):
        singles = np.ascontiguousarray(self.singles, dtype=float)
        pairs = np.ascontiguousarray(self.pairs, dtype=float)
        edges = _canonical_edges(self.edges)
        # _canonical_edges may reorder rows; pairs must follow the same order
        raw = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        lo = raw.min(axis=1)
        hi = raw.max(axis=1)
        swapped = raw[:, 0] > raw[:, 1]
        pairs = pairs.copy()
        pairs[swapped] = np.transpose(pairs[swapped], (0, 2, 1))
        order = np.lexsort((hi, lo))
        pairs = pairs[order]
        if singles.ndim != 2 or singles.shape[1] != 2:
            raise ValueError("singles must be (N, 2)")
        if len(pairs) != len(edges):
            raise ValueError("pairs and edges length mismatch")
        for arr in (singles, edges, pairs):
            arr.setflags(write=False)
        object.__setattr__(self, "singles", singles)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_vars(self):
        return len(self.singles)

    @property
    def n_edges(self):
        return len(self.edges)

    def graph(self):
        return FactorGraph(self.n_vars, self.edges)

    def edge_index(self):
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}


def subset_stats(stats, edges):
    """Restrict stats to the given edge subset (canonical order)."""
    edges = _canonical_edges(edges)
    idx = stats.edge_index()
    try:
        rows = np.array([idx[(int(i), int(j))] for i, j in edges], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"edge {exc} not present in stats") from exc
    return PairwiseStats(stats.singles, edges, stats.pairs[rows])


def validate_stats(stats, tol=1e-8):
    """Check normalization and marginal consistency of pair statistics.

    Raises ValueError naming the first violated constraint; returns the
    maximum marginal inconsistency when everything passes.
    """
    s = stats.singles
    if np.any(s < -tol) or np.any(s > 1 + tol):
        raise ValueError("single-site probabilities outside [0, 1]")
    err = np.max(np.abs(s.sum(axis=1) - 1.0))
    if err > tol:
        raise ValueError(f"single-site tables not normalized (err={err:.3g})")
    p = stats.pairs
    if np.any(p < -tol):
        raise ValueError("negative pair probabilities")
    err = np.max(np.abs(p.sum(axis=(1, 2)) - 1.0)) if len(p) else 0.0
    if err > tol:
        raise ValueError(f"pair tables not normalized (err={err:.3g})")
    worst = 0.0
    if len(p):
        i = stats.edges[:, 0]
        j = stats.edges[:, 1]
        worst = max(
            np.max(np.abs(p.sum(axis=2) - s[i])),
            np.max(np.abs(p.sum(axis=1) - s[j])),
        )
        if worst > tol:
            raise ValueError(f"pair marginals inconsistent with singles (err={worst:.3g})")
    return float(worst)


def pruning_score(stats):
    """Per-edge score |log(p11 p00 / (p01 p10))|, clamped before the log."""
    p = clamp_probs(stats.pairs)
    return np.abs(
        np.log(p[:, 1, 1]) + np.log(p[:, 0, 0]) - np.log(p[:, 0, 1]) - np.log(p[:, 1, 0])
    )


def _ranked_order(scores, edges):
    """Indices sorting by descending score, ties broken lexicographically."""
    return np.lexsort((edges[:, 1], edges[:, 0], -scores))


def prune(stats, mean_degree):
    """Keep the ceil(N * K / 2) highest-scoring edges, then repair connectivity.

    Repair walks the remaining candidates in score order and inserts any edge
    that joins two components.  Raises if the candidate set cannot connect
    the graph or if the requested mean degree exceeds N - 1.
    """
    n = stats.n_vars
    if not 0 < mean_degree <= n - 1:
        raise ValueError(f"mean degree must be in (0, {n - 1}]")
    n_keep = int(np.ceil(n * mean_degree / 2))
    if n_keep > stats.n_edges:
        raise ValueError("not enough candidate edges for requested degree")
    order = _ranked_order(pruning_score(stats), stats.edges)
    kept = list(order[:n_keep])
    uf = _UnionFind(n)
    n_comp = n
    for k in kept:
        if uf.union(int(stats.edges[k, 0]), int(stats.edges[k, 1])):
            n_comp -= 1
    for k in order[n_keep:]:
        if n_comp == 1:
            break
        if uf.union(int(stats.edges[k, 0]), int(stats.edges[k, 1])):
            n_comp -= 1
            kept.append(k)
    if n_comp != 1:
        raise ValueError("candidate edges cannot connect the graph")
    return FactorGraph(n, stats.edges[np.sort(np.asarray(kept))])


def wst_edge_fractions(graph, weights):
    """Expected edge membership counts under the weighted spanning tree measure.

    For tree probability proportional to the product of its edge weights,
    fraction_e = w_e * R_eff(e) with R_eff the effective resistance of the
    edge under conductances w.  Fractions sum to n_vars - 1.
    """
    w = np.asarray(weights, dtype=float)
    if len(w) != graph.n_edges:
        raise ValueError("one weight per edge required")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if not graph.is_connected():
        raise ValueError("graph must be connected")
    n = graph.n_vars
    i = graph.edges[:, 0]
    j = graph.edges[:, 1]
    lap = np.zeros((n, n))
    np.add.at(lap, (i, i), w)
    np.add.at(lap, (j, j), w)
    np.add.at(lap, (i, j), -w)
    np.add.at(lap, (j, i), -w)
    pinv = np.linalg.pinv(lap, hermitian=True)
    r_eff = pinv[i, i] + pinv[j, j] - 2.0 * pinv[i, j]
    return w * r_eff


def sort_edges(stats, couplings, criterion="simple"):
    """Rank the stats' edges for quantile binning.

    criterion "simple" orders by |J| alone, "absolute" by |J| times the
    edge's weighted-spanning-tree fraction, "relative" by the fraction
    alone.  ``couplings`` may be a Couplings object or a per-edge array of
    coupling values aligned with stats.edges.
    """
    j = np.asarray(getattr(couplings, "bj", couplings), dtype=float)
    if len(j) != stats.n_edges:
        raise ValueError("one coupling per stats edge required")
    absj = np.abs(j)
    if criterion == "simple":
        scores = absj
    elif criterion in ("absolute", "relative"):
        frac = wst_edge_fractions(stats.graph(), np.maximum(absj, 1e-30))
        scores = absj * frac if criterion == "absolute" else frac
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    order = _ranked_order(scores, stats.edges)
    return EdgeRanking(stats.edges[order], scores[order], criterion)


@dataclass(frozen=True)
class EdgeRanking:
    """Edges in rank order (best first) with their scores."""

    edges: np.ndarray
    scores: np.ndarray
    criterion: str

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=float)
        if len(edges) != len(scores):
            raise ValueError("edges and scores length mismatch")
        if np.any(np.diff(scores) > 1e-12):
            raise ValueError("scores must be non-increasing")
        edges.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "scores", scores)


def _fmt(x):
    return f"{x:.17g}"


def write_stats_csv(stats, path_or_buf):
    """Write stats as a singles block (i,p0,p1) then a pairs block."""
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("# singles\ni,p0,p1\n")
        for i, row in enumerate(stats.singles):
            f.write(f"{i},{_fmt(row[0])},{_fmt(row[1])}\n")
        f.write("# pairs\ni,j,p00,p01,p10,p11\n")
        for (i, j), t in zip(stats.edges, stats.pairs):
            f.write(
                f"{i},{j},{_fmt(t[0, 0])},{_fmt(t[0, 1])},{_fmt(t[1, 0])},{_fmt(t[1, 1])}\n"
            )
    finally:
        if own:
            f.close()


def read_stats_csv(path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf) if own else path_or_buf
    singles, edges, pairs = [], [], []
    try:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line[0].isalpha():
                continue
            parts = line.split(",")
            if len(parts) == 3:
                singles.append((int(parts[0]), float(parts[1]), float(parts[2])))
            elif len(parts) == 6:
                edges.append((int(parts[0]), int(parts[1])))
                t = np.array(
                    [[float(parts[2]), float(parts[3])], [float(parts[4]), float(parts[5])]]
                )
                pairs.append(t)
            else:
                raise ValueError(f"unrecognized stats row: {line!r}")
    finally:
        if own:
            f.close()
    singles.sort()
    s = np.array([[p0, p1] for _, p0, p1 in singles])
    return PairwiseStats(s, np.array(edges).reshape(-1, 2), np.array(pairs).reshape(-1, 2, 2))


def stats_csv_roundtrip(stats):
    """Serialize and re-read stats; used to verify the format is lossless."""
    buf = io.StringIO()
    write_stats_csv(stats, buf)
    buf.seek(0)
    return read_stats_csv(buf)
