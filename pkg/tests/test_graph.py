import io
import itertools

import numpy as np
import pytest

from beliefmix import FactorGraph, PairwiseStats, subset_stats
from beliefmix.factor_graph import (
    EdgeRanking,
    prune,
    pruning_score,
    read_stats_csv,
    sort_edges,
    validate_stats,
    write_stats_csv,
    wst_edge_fractions,
)


def random_stats(rng, n, edges=None):
    """Valid pairwise tables with matching singles."""
    if edges is None:
        edges = np.array(list(itertools.combinations(range(n), 2)))
    pairs = rng.uniform(0.05, 1.0, size=(len(edges), 2, 2))
    pairs /= pairs.sum(axis=(1, 2), keepdims=True)
    singles = np.full((n, 2), 0.5)
    # make singles consistent with the first table touching each variable
    seen = set()
    for k, (i, j) in enumerate(edges):
        if i not in seen:
            singles[i] = pairs[k].sum(axis=1)
            seen.add(i)
        if j not in seen:
            singles[j] = pairs[k].sum(axis=0)
            seen.add(j)
    # then rebuild every table as the product measure so all margins agree
    pairs = singles[edges[:, 0]][:, :, None] * singles[edges[:, 1]][:, None, :]
    mix = rng.uniform(-0.5, 0.5, size=len(edges))
    corr = np.zeros((len(edges), 2, 2))
    for k, (i, j) in enumerate(edges):
        m = min(singles[i, 0], singles[i, 1], singles[j, 0], singles[j, 1])
        c = mix[k] * m * 0.5
        corr[k] = np.array([[c, -c], [-c, c]])
    return PairwiseStats(singles, edges, pairs + corr)


def spanning_tree_fractions(n, edges, weights):
    """Brute-force expected edge membership over all spanning trees."""
    total = np.zeros(len(edges))
    z = 0.0
    for subset in itertools.combinations(range(len(edges)), n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for k in subset:
            a, b = find(edges[k][0]), find(edges[k][1])
            if a == b:
                ok = False
                break
            parent[a] = b
        if not ok:
            continue
        w = np.prod([weights[k] for k in subset])
        z += w
        for k in subset:
            total[k] += w
    return total / z


def test_graph_basics():
    g = FactorGraph.complete(5)
    assert g.n_edges == 10
    assert g.is_connected()
    assert np.all(g.degrees() == 4)
    g2 = FactorGraph(4, np.array([[0, 1], [2, 3]]))
    assert not g2.is_connected()


def test_edges_canonicalized():
    g = FactorGraph(4, np.array([[3, 1], [0, 2], [1, 0]]))
    assert np.all(g.edges[:, 0] < g.edges[:, 1])
    assert g.edges[0, 0] == 0
    with pytest.raises(ValueError):
        FactorGraph(3, np.array([[0, 0]]))
    with pytest.raises(ValueError):
        FactorGraph(3, np.array([[0, 1], [1, 0]]))


def test_validate_stats_catches_bad_margins():
    rng = np.random.default_rng(0)
    stats = random_stats(rng, 5)
    validate_stats(stats)
    bad = PairwiseStats(
        stats.singles.copy(),
        stats.edges.copy(),
        np.roll(stats.pairs.copy(), 1, axis=0),
    )
    with pytest.raises(ValueError):
        validate_stats(bad)


def test_pruning_score_log_ratio():
    singles = np.full((2, 2), 0.5)
    pairs = np.array([[[0.3, 0.2], [0.2, 0.3]]])
    stats = PairwiseStats(singles, np.array([[0, 1]]), pairs)
    score = pruning_score(stats)[0]
    assert abs(score - np.log(2.25)) < 1e-12
    assert abs(score - 0.8109302162163288) < 1e-12


def test_prune_keeps_strongest_and_connects():
    rng = np.random.default_rng(1)
    for trial in range(10):
        stats = random_stats(rng, 8)
        k = rng.integers(2, 7)
        g = prune(stats, int(k))
        assert g.is_connected()
        assert g.n_edges >= int(np.ceil(8 * k / 2))


def test_subset_stats_matches_parent():
    rng = np.random.default_rng(2)
    stats = random_stats(rng, 6)
    keep = stats.edges[[0, 3, 7]]
    sub = subset_stats(stats, keep)
    assert sub.n_edges == 3
    idx = stats.edge_index()
    for k, (i, j) in enumerate(sub.edges):
        assert np.allclose(sub.pairs[k], stats.pairs[idx[(i, j)]])


def test_wst_triangle_uniform():
    g = FactorGraph(3, np.array([[0, 1], [0, 2], [1, 2]]))
    frac = wst_edge_fractions(g, np.ones(3))
    assert np.allclose(frac, 2.0 / 3.0, atol=1e-12)


def test_wst_four_cycle_weighted():
    edges = np.array([[0, 1], [1, 2], [2, 3], [0, 3]])
    g = FactorGraph(4, edges)
    frac = wst_edge_fractions(g, np.array([1.0, 1.0, 1.0, 3.0]))
    assert np.allclose(frac[:3], 0.7, atol=1e-12)
    assert abs(frac[3] - 0.9) < 1e-12


def test_wst_matches_enumeration():
    rng = np.random.default_rng(3)
    for trial in range(50):
        n = int(rng.integers(3, 9))
        full = np.array(list(itertools.combinations(range(n), 2)))
        while True:
            mask = rng.random(len(full)) < 0.6
            if mask.sum() >= n - 1 and FactorGraph(n, full[mask]).is_connected():
                break
        edges = full[mask]
        g = FactorGraph(n, edges)
        w = rng.uniform(0.2, 3.0, size=g.n_edges)
        frac = wst_edge_fractions(g, w)
        oracle = spanning_tree_fractions(n, edges.tolist(), w)
        assert np.max(np.abs(frac - oracle)) < 1e-9
        assert abs(frac.sum() - (n - 1)) < 1e-9


def test_sort_edges_simple_is_by_magnitude():
    rng = np.random.default_rng(4)
    stats = random_stats(rng, 6)
    j = rng.normal(size=stats.n_edges)
    ranking = sort_edges(stats, j, criterion="simple")
    assert np.all(np.diff(ranking.scores) <= 1e-12)
    assert set(map(tuple, ranking.edges)) == set(map(tuple, stats.edges))
    with pytest.raises(ValueError):
        sort_edges(stats, j, criterion="nope")


def test_edge_ranking_rejects_increasing_scores():
    with pytest.raises(ValueError):
        EdgeRanking(np.array([[0, 1], [0, 2]]), np.array([0.1, 0.9]), "simple")


def test_stats_csv_roundtrip():
    rng = np.random.default_rng(5)
    stats = random_stats(rng, 7)
    buf = io.StringIO()
    write_stats_csv(stats, buf)
    text = buf.getvalue()
    back = read_stats_csv(io.StringIO(text))
    assert np.array_equal(back.edges, stats.edges)
    assert np.max(np.abs(back.pairs - stats.pairs)) == 0.0
    assert np.max(np.abs(back.singles - stats.singles)) == 0.0
    buf2 = io.StringIO()
    write_stats_csv(back, buf2)
    assert buf2.getvalue() == text
