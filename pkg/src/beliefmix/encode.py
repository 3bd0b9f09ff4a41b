"""Potential construction from pair statistics and the induced couplings.

Three encodings share the same raw material: the plain ratio tables
psi = p_a / (p_i p_j) that leave uniform messages stationary, a tempered
family psi^alpha (or its convex analogue), and a quantile model that
assigns a separate exponent to each band of an edge ranking and drops the
tail.  The Ising form of the tempered model is exposed as combined
quantities beta*J and beta*h; beta itself only becomes meaningful through
the temperature map beta = 4*alpha*v*K/C.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bp import Potentials
from .factor_graph import FactorGraph, _UnionFind, clamp_probs

__all__ = [
    "AlphaModel",
    "QuantileModel",
    "Couplings",
    "bethe_potentials",
    "tempered_potentials",
    "quantile_potentials",
    "ising_couplings",
    "beta_of_alpha",
    "alpha_of_beta",
    "write_model_toml",
    "read_model_toml",
]


@dataclass(frozen=True)
class AlphaModel:
    """Single tempering exponent applied to every edge."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class QuantileModel:
    """Per-band exponents over an edge ranking.

    Band k covers ranking positions (r_{k-1} E, r_k E]; positions beyond
    r_q E are dropped.  alphas[k] is the exponent of band k.
    """

    alphas: np.ndarray
    quantiles: np.ndarray
    criterion: str = "simple"

    def __post_init__(self):
        a = np.ascontiguousarray(self.alphas, dtype=float)
        r = np.ascontiguousarray(self.quantiles, dtype=float)
        if a.ndim != 1 or a.shape != r.shape or len(a) == 0:
            raise ValueError("alphas and quantiles must be equal-length 1d arrays")
        if np.any(a <= 0):
            raise ValueError("alphas must be positive")
        if r[0] <= 0 or np.any(np.diff(r) <= 0) or r[-1] > 1:
            raise ValueError("quantiles must be strictly increasing in (0, 1]")
        a.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "quantiles", r)

    @property
    def q_parts(self):
        return len(self.alphas)


@dataclass(frozen=True)
class Couplings:
    """Pairwise spin couplings and local fields, premultiplied by beta."""

    bj: np.ndarray
    bh: np.ndarray
    edges: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        bj = np.ascontiguousarray(self.bj, dtype=float)
        bh = np.ascontiguousarray(self.bh, dtype=float)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(bj) != len(edges):
            raise ValueError("one coupling per edge required")
        for arr in (bj, bh, edges):
            arr.setflags(write=False)
        object.__setattr__(self, "bj", bj)
        object.__setattr__(self, "bh", bh)
        object.__setattr__(self, "edges", edges)


def _ratio_tables(stats):
    """p_a / (p_i p_j) per edge, on clamped tables."""
    singles = clamp_probs(stats.singles)
    pairs = clamp_probs(stats.pairs)
    i = stats.edges[:, 0]
    j = stats.edges[:, 1]
    return pairs / (singles[i][:, :, None] * singles[j][:, None, :])


def bethe_potentials(stats):
    """phi_i = p_i and psi_a = p_a / (p_i p_j).

    Uniform messages are a fixed point of these potentials, with beliefs
    equal to the input statistics.
    """
    return Potentials(clamp_probs(stats.singles), _ratio_tables(stats), stats.edges)


def tempered_potentials(stats, model, mode="geometric"):
    """Interpolate the ratio tables toward the independent model.

    geometric: psi = (p_a / p_i p_j)^alpha.  convex: psi = alpha * ratio
    + (1 - alpha), only defined for alpha <= 1.  Both keep phi_i = p_i and
    reduce to bethe_potentials at alpha = 1 and to psi = 1 as alpha -> 0.
    """
    if isinstance(model, (int, float)):
        model = AlphaModel(float(model))
    ratio = _ratio_tables(stats)
    if mode == "geometric":
        psi = ratio**model.alpha
    elif mode == "convex":
        if model.alpha > 1.0:
            raise ValueError("convex mode requires alpha <= 1")
        psi = model.alpha * ratio + (1.0 - model.alpha)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Potentials(clamp_probs(stats.singles), psi, stats.edges)


def quantile_potentials(stats, model, ranking):
    """Per-band tempering over a ranking, dropping the tail band.

    Ranking positions (1-based) in (ceil(r_{k-1} E), ceil(r_k E)] receive
    exponent alphas[k]; positions past ceil(r_q E) are removed, then the
    graph is repaired by walking the dropped edges in rank order and
    re-inserting any that joins two components (at the last band's
    exponent).  Returns the potentials and the kept graph.
    """
    n_ranked = len(ranking.edges)
    if n_ranked != stats.n_edges:
        raise ValueError("ranking must cover all candidate edges")
    idx = stats.edge_index()
    try:
        rank_to_stats = np.array(
            [idx[(int(i), int(j))] for i, j in ranking.edges], dtype=np.int64
        )
    except KeyError as exc:
        raise ValueError(f"ranked edge {exc} not present in stats") from exc

    bounds = np.ceil(model.quantiles * n_ranked).astype(np.int64)
    n_keep = int(bounds[-1])
    if n_keep == 0:
        raise ValueError("quantile tail keeps no edges")
    positions = np.arange(n_keep)
    band = np.searchsorted(bounds, positions, side="right")
    alpha_of_pos = model.alphas[band]

    kept_pos = list(range(n_keep))
    uf = _UnionFind(stats.n_vars)
    n_comp = stats.n_vars
    for p in kept_pos:
        if uf.union(int(ranking.edges[p, 0]), int(ranking.edges[p, 1])):
            n_comp -= 1
    repaired_alpha = float(model.alphas[-1])
    extra_pos = []
    for p in range(n_keep, n_ranked):
        if n_comp == 1:
            break
        if uf.union(int(ranking.edges[p, 0]), int(ranking.edges[p, 1])):
            n_comp -= 1
            extra_pos.append(p)
    if n_comp != 1:
        raise ValueError("ranked edges cannot connect the graph")

    all_pos = np.array(kept_pos + extra_pos, dtype=np.int64)
    alphas = np.concatenate([alpha_of_pos, np.full(len(extra_pos), repaired_alpha)])
    edges = ranking.edges[all_pos]
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    alphas = alphas[order]
    stats_idx = rank_to_stats[all_pos][order]

    ratio = _ratio_tables(stats)[stats_idx]
    psi = ratio ** alphas[:, None, None]
    graph = FactorGraph(stats.n_vars, edges)
    return Potentials(clamp_probs(stats.singles), psi, graph.edges), graph


def ising_couplings(stats, alpha):
    """Spin form of the tempered geometric model.

    With s = 2x - 1, beta*J_ij = (alpha/4) log(p11 p00 / (p01 p10)) and
    beta*h_i collects the single-site term (1 - alpha*K_i)/2 * log(p1/p0)
    plus the local constants of every incident pair table (the table is
    read with i as its first index).
    """
    if isinstance(alpha, AlphaModel):
        alpha = alpha.alpha
    singles = clamp_probs(stats.singles)
    lp = np.log(clamp_probs(stats.pairs))
    bj = (alpha / 4.0) * (lp[:, 1, 1] + lp[:, 0, 0] - lp[:, 0, 1] - lp[:, 1, 0])
    side_first = lp[:, 1, 1] + lp[:, 1, 0] - lp[:, 0, 1] - lp[:, 0, 0]
    side_second = lp[:, 1, 1] + lp[:, 0, 1] - lp[:, 1, 0] - lp[:, 0, 0]
    n = stats.n_vars
    deg = np.zeros(n)
    np.add.at(deg, stats.edges[:, 0], 1.0)
    np.add.at(deg, stats.edges[:, 1], 1.0)
    pair_term = np.zeros(n)
    np.add.at(pair_term, stats.edges[:, 0], side_first)
    np.add.at(pair_term, stats.edges[:, 1], side_second)
    log_odds = np.log(singles[:, 1]) - np.log(singles[:, 0])
    bh = 0.5 * (1.0 - alpha * deg) * log_odds + (alpha / 4.0) * pair_term
    return Couplings(bj, bh, stats.edges)


def beta_of_alpha(alpha, v, k_mean, n_components):
    """Inverse temperature of the tempered model, beta = 4 alpha v K / C."""
    return 4.0 * alpha * v * k_mean / n_components


def alpha_of_beta(beta, v, eta):
    """Exponent reaching inverse temperature beta at load eta = C / K."""
    return beta * eta / (4.0 * v)


def _toml_list(values):
    return "[" + ", ".join(f"{float(x):.17g}" for x in values) + "]"


def write_model_toml(model, path):
    with open(path, "w") as f:
        if isinstance(model, AlphaModel):
            f.write(f"alpha = {model.alpha:.17g}\n")
        elif isinstance(model, QuantileModel):
            f.write(f"alphas = {_toml_list(model.alphas)}\n")
            f.write(f"quantiles = {_toml_list(model.quantiles)}\n")
            f.write(f'criterion = "{model.criterion}"\n')
        else:
            raise TypeError(f"cannot serialize {type(model).__name__}")


def read_model_toml(path):
    with open(path, "rb") as f:
        data = tomllib.load(f)
    if "alpha" in data:
        return AlphaModel(float(data["alpha"]))
    if "alphas" in data:
        return QuantileModel(
            np.asarray(data["alphas"], dtype=float),
            np.asarray(data["quantiles"], dtype=float),
            str(data.get("criterion", "simple")),
        )
    raise ValueError(f"{path}: neither an alpha nor a quantile model")
