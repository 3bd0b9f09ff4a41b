"""Hidden mixture ground truth, exact reference conditionals, and metrics.

A mixture is C product measures over N binary variables, each component
defined by site probabilities p_i^c = (1 + tanh h_i^c) / 2 with the fields
drawn uniformly from [-h_max, h_max].  The polarization variance
v = E[tanh^2 h] / 4 controls how biased the components are; experiments
fix v and solve for h_max.

Everything downstream is exact: pair statistics come from the closed-form
mixture moments, and reference conditionals P(x_i | observed) are the
component-weighted site marginals with weights computed in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._parallel import thread_map
from .bp import (
    BpConfig,
    Evidence,
    GuideSchedule,
    classify_fixed_points,
    random_messages,
    run_bp,
    uniform_messages,
)
from .encode import AlphaModel, QuantileModel, ising_couplings, quantile_potentials, tempered_potentials
from .factor_graph import FactorGraph, PairwiseStats, clamp_probs, prune, sort_edges, subset_stats

__all__ = [
    "DEFAULT_RHO_GRID",
    "MixtureModel",
    "Metrics",
    "DecimationCurve",
    "CensusPoint",
    "Census",
    "field_variance",
    "h_max_for_variance",
    "generate_mixture",
    "exact_pair_stats",
    "sample_component",
    "component_log_weights",
    "exact_conditional",
    "exact_conditionals",
    "compute_metrics",
    "build_model_potentials",
    "run_decimation",
    "fixed_point_census",
    "write_decimation_csv",
    "write_census_csv",
]

DEFAULT_RHO_GRID = (0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.7, 0.9)


def field_variance(h_max):
    """v = E[tanh^2 h] / 4 for h uniform on [-h_max, h_max].

    The average of tanh^2 over the interval is 1 - tanh(h_max)/h_max.
    """
    h = float(h_max)
    if h == 0.0:
        return 0.0
    return 0.25 * (1.0 - np.tanh(h) / h)


def h_max_for_variance(v, tol=1e-14):
    """Invert field_variance by bisection; v must lie in [0, 1/4)."""
    if not 0.0 <= v < 0.25:
        raise ValueError("variance must be in [0, 1/4)")
    if v == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while field_variance(hi) < v:
        hi *= 2.0
        if hi > 1e9:
            raise ValueError("variance too close to 1/4")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if field_variance(mid) < v:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class MixtureModel:
    """C independent-site components over N binary variables."""

    p: np.ndarray
    h_max: float
    v: float
    v_hat: float
    seed: int

    def __post_init__(self):
        p = np.ascontiguousarray(self.p, dtype=float)
        if p.ndim != 2:
            raise ValueError("p must be (C, N)")
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("component probabilities must be strictly inside (0, 1)")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n_components(self):
        return self.p.shape[0]

    @property
    def n_vars(self):
        return self.p.shape[1]

    def magnetizations(self):
        return 2.0 * self.p - 1.0

    def optimal_patterns(self):
        """Most likely configuration of each component, 1{p_i^c > 1/2}."""
        return (self.p > 0.5).astype(np.int64)

    def xi_components(self):
        """Standardized patterns (p_i^c - 1/2) / sqrt(v), shape (C, N)."""
        if self.v <= 0:
            raise ValueError("xi is undefined at zero variance")
        return (self.p - 0.5) / np.sqrt(self.v)

    def xi_single(self):
        return self.xi_components().mean(axis=0)

    def xi_pair(self, edges):
        """Covariance (1/C) sum_c xi_i^c xi_j^c - xi_i xi_j per edge."""
        xi = self.xi_components()
        xbar = xi.mean(axis=0)
        i = np.asarray(edges, dtype=np.int64)[:, 0]
        j = np.asarray(edges, dtype=np.int64)[:, 1]
        return (xi[:, i] * xi[:, j]).mean(axis=0) - xbar[i] * xbar[j]


def generate_mixture(n_vars, n_components, h_max, seed=0):
    """Draw the component fields and store both analytic and sample v."""
    if n_vars < 1 or n_components < 1:
        raise ValueError("need at least one variable and one component")
    if not h_max > 0:
        raise ValueError("h_max must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    h = rng.uniform(-h_max, h_max, size=(n_components, n_vars))
    # tanh saturates to exactly 1 above ~19; keep p strictly inside (0, 1)
    p = clamp_probs(0.5 * (1.0 + np.tanh(h)))
    v_hat = float(np.mean((p - 0.5) ** 2))
    return MixtureModel(p, float(h_max), field_variance(h_max), v_hat, seed)


def exact_pair_stats(mixture, edges=None):
    """Closed-form mixture statistics on the given edges (default: all pairs).

    p_i(t) = (1/C) sum_c p_i^c(t) and
    p_ij(t, t') = (1/4C) sum_c (1 + s m_i^c)(1 + s' m_j^c) with s = 2t - 1.
    """
    n = mixture.n_vars
    if edges is None:
        edges = FactorGraph.complete(n).edges
    else:
        edges = np.asarray(edges, dtype=np.int64)
    m = mixture.magnetizations()
    mbar = m.mean(axis=0)
    singles = np.stack([0.5 * (1.0 - mbar), 0.5 * (1.0 + mbar)], axis=1)
    i = edges[:, 0]
    j = edges[:, 1]
    mm = (m[:, i] * m[:, j]).mean(axis=0)
    sgn = np.array([-1.0, 1.0])
    pairs = 0.25 * (
        1.0
        + sgn[None, :, None] * mbar[i][:, None, None]
        + sgn[None, None, :] * mbar[j][:, None, None]
        + sgn[None, :, None] * sgn[None, None, :] * mm[:, None, None]
    )
    return PairwiseStats(singles, edges, pairs)


def sample_component(mixture, c, seed=0):
    """One Bernoulli draw per site from component c."""
    if not 0 <= c < mixture.n_components:
        raise ValueError(f"component {c} out of range")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(c),)))
    return (rng.random(mixture.n_vars) < mixture.p[c]).astype(np.int64)


def component_log_weights(mixture, evidence):
    """Unnormalized log weight of each component given the observations."""
    obs = evidence.observed_mask()
    if not np.any(obs):
        return np.zeros(mixture.n_components)
    x = evidence.states[obs]
    p = clamp_probs(mixture.p[:, obs])
    return np.where(x == 1, np.log(p), np.log1p(-p)).sum(axis=1)


def exact_conditionals(mixture, evidence=None):
    """Reference table P(x_i | observed) for every variable, shape (N, 2).

    Observed rows are one-hot.  Rows for hidden variables mix the component
    marginals with posterior component weights.
    """
    if evidence is None:
        evidence = Evidence.none(mixture.n_vars)
    logw = component_log_weights(mixture, evidence)
    if np.all(np.isneginf(logw)):
        raise ValueError("evidence has zero probability under every component")
    w = np.exp(logw - logw.max())
    w /= w.sum()
    p1 = w @ mixture.p
    out = np.stack([1.0 - p1, p1], axis=1)
    obs = evidence.observed_mask()
    if np.any(obs):
        idx = np.nonzero(obs)[0]
        out[idx] = 0.0
        out[idx, evidence.states[idx]] = 1.0
    return out


def exact_conditional(mixture, evidence, i):
    if evidence.states[i] >= 0:
        raise ValueError(f"variable {i} is observed")
    return exact_conditionals(mixture, evidence)[i]


@dataclass(frozen=True)
class Metrics:
    """Recovery rate, L1 error, KL divergence, and the oracle rate R0."""

    r: float
    r0: float
    err: float
    dkl: float
    rho: float = 0.0
    component: int | None = None


def compute_metrics(beliefs, mixture, sequence, evidence=None, component=None):
    """Score beliefs against the reference conditionals on hidden sites.

    r is the fraction of hidden sites where thresholding the belief at 1/2
    (ties predict 0) recovers sequence; r0 applies the same rule to the
    reference itself.  err sums |b - P_ref| over both states; dkl is
    KL(belief || reference) with clamped beliefs.  All three average over
    hidden sites only.
    """
    singles = getattr(beliefs, "singles", beliefs)
    b = np.asarray(singles, dtype=float)
    if evidence is None:
        evidence = Evidence.none(mixture.n_vars)
    hidden = ~evidence.observed_mask()
    if not np.any(hidden):
        raise ValueError("no hidden variables to score")
    x = np.asarray(sequence, dtype=np.int64)[hidden]
    ref = exact_conditionals(mixture, evidence)[hidden]
    bh = b[hidden]
    pred = bh[:, 1] > 0.5
    r = float(np.mean(pred == (x == 1)))
    pred0 = ref[:, 1] > 0.5
    r0 = float(np.mean(pred0 == (x == 1)))
    err = float(np.mean(np.abs(bh - ref).sum(axis=1)))
    bc = clamp_probs(bh)
    rc = clamp_probs(ref)
    dkl = float(np.mean((bc * (np.log(bc) - np.log(rc))).sum(axis=1)))
    rho = evidence.n_observed / mixture.n_vars
    return Metrics(r, r0, err, dkl, rho, component)


def build_model_potentials(mixture, model, mode="geometric", mean_degree=None):
    """Potentials and graph for an encoding model over the exact statistics.

    AlphaModel tempers every edge of the complete graph (optionally pruned
    to the given mean degree first); QuantileModel ranks edges by its
    sorting criterion and tempers per band.
    """
    stats = exact_pair_stats(mixture)
    if mean_degree is not None:
        graph = prune(stats, mean_degree)
        stats = subset_stats(stats, graph.edges)
    if isinstance(model, (int, float)):
        model = AlphaModel(float(model))
    if isinstance(model, AlphaModel):
        pot = tempered_potentials(stats, model, mode)
        return pot, stats.graph(), stats
    if isinstance(model, QuantileModel):
        ranking = sort_edges(stats, ising_couplings(stats, 1.0), model.criterion)
        pot, graph = quantile_potentials(stats, model, ranking)
        return pot, graph, stats
    raise TypeError(f"unsupported model {type(model).__name__}")


@dataclass(frozen=True)
class DecimationCurve:
    """Metrics along a reveal-fraction grid, one row per (seed, component)."""

    rho: np.ndarray
    raw_r: np.ndarray
    raw_r0: np.ndarray
    raw_err: np.ndarray
    raw_dkl: np.ndarray
    converged: np.ndarray
    seed: int

    @property
    def n_runs(self):
        return self.raw_r.shape[1] * self.raw_r.shape[2]

    @property
    def r(self):
        return self.raw_r.mean(axis=(1, 2))

    @property
    def r0(self):
        return self.raw_r0.mean(axis=(1, 2))

    @property
    def err(self):
        return self.raw_err.mean(axis=(1, 2))

    @property
    def dkl(self):
        return self.raw_dkl.mean(axis=(1, 2))

    @property
    def n_converged(self):
        return self.converged.sum(axis=(1, 2))


def _task_seeds(master, spawn_key, count):
    ss = np.random.SeedSequence(master, spawn_key=spawn_key)
    return [int(x) for x in ss.generate_state(count, dtype=np.uint64)]


def run_decimation(
    mixture,
    model,
    rho_grid=None,
    n_seeds=5,
    seed=0,
    config=None,
    mode="geometric",
    mean_degree=None,
    threads=None,
):
    """Reveal each sampled sequence gradually and score BP at every step.

    Each (seed, component) task samples a sequence from the component and
    a random reveal order, then for every rho in the grid fixes the first
    ceil(rho N) revealed sites as evidence and runs BP from uniform
    messages with no guiding field.
    """
    rho = np.asarray(DEFAULT_RHO_GRID if rho_grid is None else rho_grid, dtype=float)
    if np.any(np.diff(rho) <= 0) or rho[0] < 0 or rho[-1] >= 1:
        raise ValueError("rho grid must be strictly increasing in [0, 1)")
    if np.ceil(rho[-1] * mixture.n_vars) >= mixture.n_vars:
        raise ValueError("largest rho leaves no hidden variables")
    config = config or BpConfig(max_iters=1000, tol=1e-9)
    pot, graph, _ = build_model_potentials(mixture, model, mode, mean_degree)
    n = mixture.n_vars
    n_c = mixture.n_components
    n_obs = np.ceil(rho * n).astype(int)

    def one_task(item):
        s, c = item
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s, c)))
        x = (rng.random(n) < mixture.p[c]).astype(np.int64)
        order = rng.permutation(n)
        bp_seeds = _task_seeds(seed, (s, c, 1), len(rho))
        rows = []
        for g, k in enumerate(n_obs):
            states = np.full(n, -1, dtype=np.int64)
            states[order[:k]] = x[order[:k]]
            ev = Evidence(states)
            cfg = replace(config, seed=bp_seeds[g])
            _, bel, status = run_bp(graph, pot, cfg, evidence=ev)
            m = compute_metrics(bel, mixture, x, ev, component=c)
            rows.append((m.r, m.r0, m.err, m.dkl, status.converged))
        return rows

    items = [(s, c) for s in range(n_seeds) for c in range(n_c)]
    results = thread_map(one_task, items, threads)
    shape = (len(rho), n_seeds, n_c)
    raw = np.zeros(shape + (4,))
    conv = np.zeros(shape, dtype=bool)
    for (s, c), rows in zip(items, results):
        for g, (r, r0, err, dkl, ok) in enumerate(rows):
            raw[g, s, c] = (r, r0, err, dkl)
            conv[g, s, c] = ok
    return DecimationCurve(
        rho, raw[..., 0], raw[..., 1], raw[..., 2], raw[..., 3], conv, seed
    )


def write_decimation_csv(curve, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("rho,R,R0,E,DKL,n_converged,n_runs\n")
        r, r0, err, dkl = curve.r, curve.r0, curve.err, curve.dkl
        nc = curve.n_converged
        for g in range(len(curve.rho)):
            f.write(
                f"{curve.rho[g]:.17g},{r[g]:.17g},{r0[g]:.17g},"
                f"{err[g]:.17g},{dkl[g]:.17g},{int(nc[g])},{curve.n_runs}\n"
            )
    finally:
        if own:
            f.close()


@dataclass(frozen=True)
class CensusPoint:
    """Fixed-point statistics of one tempering exponent."""

    alpha: float
    recovered_frac: float
    spurious_prob: float
    distinct_spurious: int
    distinct_total: int
    n_converged: int
    n_starts: int


@dataclass(frozen=True)
class Census:
    points: list

    def column(self, name):
        return np.array([getattr(p, name) for p in self.points])


def fixed_point_census(
    mixture,
    alphas,
    n_starts=100,
    seed=0,
    guide_h0=1.0,
    guide_decay=0.9,
    config=None,
    guided_config=None,
    match_threshold=0.2,
    dedup_tol=1e-6,
    threads=None,
):
    """Count pattern recovery and spurious fixed points along an alpha scan.

    For each alpha: every component is targeted once with a decaying guide
    from uniform messages (recovered when the run converges onto that
    component's marginals), then n_starts unguided runs from random
    messages are classified and deduplicated.  spurious_prob counts runs
    that converged to a fixed point matching no component, over all starts.
    The default match threshold absorbs the O(sqrt(eta v)) cross-talk a
    retrieval state carries at finite size; the paramagnetic point sits
    several times further from every component.
    """
    stats = exact_pair_stats(mixture)
    graph = stats.graph()
    config = config or BpConfig(max_iters=300, tol=1e-8)
    guided_config = guided_config or BpConfig(max_iters=450, tol=1e-7)
    patterns = mixture.optimal_patterns()

    def one_alpha(item):
        a_idx, alpha = item
        pot = tempered_potentials(stats, AlphaModel(alpha), "geometric")
        n_rec = 0
        for c in range(mixture.n_components):
            sd = _task_seeds(seed, (a_idx, 0, c), 1)[0]
            guide = GuideSchedule(patterns[c], h0=guide_h0, decay=guide_decay)
            _, bel, status = run_bp(
                graph, pot, replace(guided_config, seed=sd), guide=guide
            )
            if status.converged:
                lab = classify_fixed_points([bel], mixture.p, match_threshold).labels[0]
                if lab == f"pattern({c})":
                    n_rec += 1
        run_seeds = _task_seeds(seed, (a_idx, 1), n_starts)
        kept_beliefs = []
        kept_msgs = []
        for t in range(n_starts):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(a_idx, 2, t)))
            m0 = random_messages(graph, rng)
            msg, bel, status = run_bp(
                graph, pot, replace(config, seed=run_seeds[t]), messages=m0
            )
            if status.converged:
                kept_beliefs.append(bel)
                kept_msgs.append(msg)
        if kept_beliefs:
            cls = classify_fixed_points(
                kept_beliefs, mixture.p, match_threshold, kept_msgs, dedup_tol
            )
            n_spur = sum(1 for lab in cls.labels if lab == "spurious")
            d_spur = cls.distinct_count("spurious")
            d_tot = cls.n_distinct
        else:
            n_spur = d_spur = d_tot = 0
        return CensusPoint(
            float(alpha),
            n_rec / mixture.n_components,
            n_spur / n_starts,
            d_spur,
            d_tot,
            len(kept_beliefs),
            n_starts,
        )

    items = list(enumerate(np.asarray(alphas, dtype=float)))
    return Census(thread_map(one_alpha, items, threads))


def write_census_csv(census, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("alpha,recovered_frac,spurious_prob,distinct_spurious\n")
        for p in census.points:
            f.write(
                f"{p.alpha:.17g},{p.recovered_frac:.17g},"
                f"{p.spurious_prob:.17g},{p.distinct_spurious}\n"
            )
    finally:
        if own:
            f.close()
