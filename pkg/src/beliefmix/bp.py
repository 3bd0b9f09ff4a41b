"""Belief propagation on pairwise binary factor graphs.

The engine stores each directed message as a log-odds field
u = 0.5 * log(m(1) / m(0)) and reduces every pair potential to a coupling
plus two local constants, so one directed update is

    u[a -> i] <- a_e + atanh(tanh(J_e) * tanh(b_e + H_j - u[a -> j]))

with H_j the full local field at the source variable.  Public inputs and
outputs keep the probability-table representation; the field form is an
internal detail shared by the standard and counting-number sweeps.

Damping mixes probability tables: m_new = (1 - lam) * m_upd + lam * m_old,
which in field form is u = atanh((1 - lam) tanh(u_upd) + lam tanh(u_old)).
Convergence is measured by the sup change of the fields in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .factor_graph import FactorGraph, clamp_probs

__all__ = [
    "Potentials",
    "MessageSet",
    "BeliefSet",
    "Evidence",
    "GuideSchedule",
    "BpConfig",
    "RunStatus",
    "CountingNumbers",
    "uniform_messages",
    "random_messages",
    "bp_step",
    "run_bp",
    "compute_beliefs",
    "gbp_step",
    "run_gbp",
    "gbp_beliefs",
    "bethe_free_energy",
    "classify_fixed_points",
    "ClassifiedFixedPoints",
    "write_beliefs_csv",
    "write_fixed_points_csv",
]


@dataclass(frozen=True)
class Potentials:
    """Positive potential tables on a pairwise graph.

    phi is (N, 2); psi is (E, 2, 2) with psi[k, x_i, x_j] for edge
    k = (i, j), i < j.  Tables need not be normalized.
    """

    phi: np.ndarray
    psi: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        phi = np.ascontiguousarray(self.phi, dtype=float)
        psi = np.ascontiguousarray(self.psi, dtype=float)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(phi <= 0) or np.any(psi <= 0):
            raise ValueError("potentials must be strictly positive")
        if len(psi) != len(edges):
            raise ValueError("one psi table per edge required")
        for arr in (phi, psi, edges):
            arr.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "edges", edges)

    @property
    def n_vars(self):
        return len(self.phi)

    @property
    def n_edges(self):
        return len(self.edges)

    def graph(self):
        return FactorGraph(self.n_vars, self.edges)


@dataclass(frozen=True)
class MessageSet:
    """Directed factor-to-variable messages as normalized tables.

    values has shape (2E, 2): row 2k is the message into edges[k, 0],
    row 2k + 1 the message into edges[k, 1].
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] % 2:
            raise ValueError("values must be (2E, 2)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_edges(self):
        return len(self.values) // 2

    def fields(self):
        """Log-odds representation, one value per directed edge."""
        m = clamp_probs(self.values)
        return 0.5 * (np.log(m[:, 1]) - np.log(m[:, 0]))

    @classmethod
    def from_fields(cls, u):
        t = np.tanh(np.asarray(u, dtype=float))
        return cls(np.stack([(1.0 - t) / 2.0, (1.0 + t) / 2.0], axis=1))

    def max_distance(self, other):
        return float(np.max(np.abs(self.values - other.values))) if len(self.values) else 0.0


@dataclass(frozen=True)
class BeliefSet:
    """Single and pair beliefs with their normalizers."""

    singles: np.ndarray
    pairs: np.ndarray
    edges: np.ndarray
    z_singles: np.ndarray
    z_pairs: np.ndarray


@dataclass(frozen=True)
class Evidence:
    """Observed states: states[i] = -1 hidden, else the fixed value of x_i."""

    states: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.states, dtype=np.int64)
        if np.any(s > 1) or np.any(s < -1):
            raise ValueError("states must be -1, 0 or 1")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    @classmethod
    def from_pairs(cls, n_vars, assignments):
        s = np.full(n_vars, -1, dtype=np.int64)
        for i, x in dict(assignments).items():
            if not 0 <= i < n_vars:
                raise ValueError(f"observed index {i} out of range")
            s[i] = x
        return cls(s)

    @classmethod
    def none(cls, n_vars):
        return cls(np.full(n_vars, -1, dtype=np.int64))

    def observed_mask(self):
        return self.states >= 0

    @property
    def n_observed(self):
        return int(np.sum(self.states >= 0))


@dataclass(frozen=True)
class GuideSchedule:
    """Geometrically decaying bias toward a target configuration.

    The bias multiplies phi_i by exp(h_t * (2 x_i - 1)(2 pattern_i - 1))
    with h_t = h0 * decay^t; once h_t drops below floor it is treated as
    exactly zero, and a guided run only counts as converged after that.
    """

    pattern: np.ndarray
    h0: float = 1.0
    decay: float = 0.9
    floor: float = 1e-12

    def __post_init__(self):
        p = np.ascontiguousarray(self.pattern, dtype=np.int64)
        if np.any((p != 0) & (p != 1)):
            raise ValueError("pattern must be binary")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must be in (0, 1)")
        if self.h0 < 0:
            raise ValueError("h0 must be nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "pattern", p)

    def strength(self, t):
        h = self.h0 * self.decay**t
        return h if h >= self.floor else 0.0

    def signs(self):
        return 2.0 * self.pattern - 1.0


@dataclass(frozen=True)
class BpConfig:
    max_iters: int = 2000
    tol: float = 1e-10
    damping: float = 0.5
    schedule: str = "random-sequential"
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")
        if self.schedule not in ("random-sequential", "synchronous"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass(frozen=True)
class RunStatus:
    converged: bool
    iterations: int
    change: float


@dataclass(frozen=True)
class CountingNumbers:
    """Per-factor and per-variable counting numbers (e_a, e_i, h_a, h_i)."""

    e_factors: np.ndarray
    e_vars: np.ndarray
    h_factors: np.ndarray
    h_vars: np.ndarray

    def __post_init__(self):
        for name in ("e_factors", "e_vars", "h_factors", "h_vars"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.h_factors == 0):
            raise ValueError("h_factors must be nonzero")

    @classmethod
    def standard(cls, graph):
        """The counting numbers whose updates coincide with plain BP."""
        d = graph.degrees().astype(float)
        ones_f = np.ones(graph.n_edges)
        return cls(ones_f, np.ones(graph.n_vars), ones_f.copy(), 1.0 - d)

    @classmethod
    def fractional(cls, graph, h_factors):
        """e = 1 everywhere, h_i = 1 - sum of incident factor h's."""
        h_factors = np.asarray(h_factors, dtype=float)
        if h_factors.shape == ():
            h_factors = np.full(graph.n_edges, float(h_factors))
        h_vars = np.ones(graph.n_vars)
        np.subtract.at(h_vars, graph.edges[:, 0], h_factors)
        np.subtract.at(h_vars, graph.edges[:, 1], h_factors)
        ones_f = np.ones(graph.n_edges)
        return cls(ones_f, np.ones(graph.n_vars), h_factors, h_vars)

    def is_standard_reduction(self, graph):
        d = graph.degrees().astype(float)
        return (
            np.allclose(self.e_factors, 1.0)
            and np.allclose(self.e_vars, 1.0)
            and np.allclose(self.h_factors, 1.0)
            and np.allclose(self.h_vars, 1.0 - d)
        )

    def denominators(self, graph):
        """D_i = h_i + sum of h_a over incident factors."""
        den = self.h_vars.copy()
        np.add.at(den, graph.edges[:, 0], self.h_factors)
        np.add.at(den, graph.edges[:, 1], self.h_factors)
        return den


def uniform_messages(graph_or_potentials):
    n = getattr(graph_or_potentials, "n_edges")
    return MessageSet(np.full((2 * n, 2), 0.5))


def random_messages(graph_or_potentials, rng, low=0.01, high=0.99):
    """Messages with m(1) drawn uniformly from [low, high]."""
    n = getattr(graph_or_potentials, "n_edges")
    m1 = rng.uniform(low, high, size=2 * n)
    return MessageSet(np.stack([1.0 - m1, m1], axis=1))


def _pair_constants(psi):
    """Decompose each positive pair table into (coupling, local_i, local_j)."""
    lp = np.log(np.asarray(psi, dtype=float))
    jt = 0.25 * (lp[:, 1, 1] + lp[:, 0, 0] - lp[:, 0, 1] - lp[:, 1, 0])
    ca = 0.25 * (lp[:, 1, 1] + lp[:, 1, 0] - lp[:, 0, 1] - lp[:, 0, 0])
    cb = 0.25 * (lp[:, 1, 1] + lp[:, 0, 1] - lp[:, 1, 0] - lp[:, 0, 0])
    return jt, ca, cb


def _single_fields(phi):
    lp = np.log(np.asarray(phi, dtype=float))
    return 0.5 * (lp[:, 1] - lp[:, 0])


class _Workspace:
    """Kernel-ready arrays for one (graph, potentials) pair."""

    def __init__(self, graph, potentials, counting=None):
        if not np.array_equal(graph.edges, potentials.edges):
            raise ValueError("graph and potentials disagree on edges")
        e = graph.edges
        n_dir = 2 * len(e)
        self.var_of = np.empty(n_dir, dtype=np.int64)
        self.var_of[0::2] = e[:, 0]
        self.var_of[1::2] = e[:, 1]
        self.opp_var_of = np.empty(n_dir, dtype=np.int64)
        self.opp_var_of[0::2] = e[:, 1]
        self.opp_var_of[1::2] = e[:, 0]
        jraw, ca, cb = _pair_constants(potentials.psi)
        f = _single_fields(potentials.phi)
        if counting is None:
            ratio = np.ones(len(e))
            self.base_field = f
            self.hfac = None
            self.denom = None
        else:
            ratio = counting.e_factors / counting.h_factors
            self.base_field = counting.e_vars * f
            self.hfac = np.repeat(counting.h_factors, 2)
            den = counting.denominators(graph)
            if np.any(den == 0):
                raise ValueError("h_i plus incident h_a sums must be nonzero")
            self.denom = den
        self.tj = np.tanh(np.repeat(ratio * jraw, 2))
        self.loc_t = np.empty(n_dir)
        self.loc_t[0::2] = ratio * ca
        self.loc_t[1::2] = ratio * cb
        self.loc_o = np.empty(n_dir)
        self.loc_o[0::2] = ratio * cb
        self.loc_o[1::2] = ratio * ca


def _evidence_array(n_vars, evidence):
    if evidence is None:
        return np.full(n_vars, -1, dtype=np.int64)
    if len(evidence.states) != n_vars:
        raise ValueError("evidence length mismatch")
    return evidence.states


def _guide_arrays(n_vars, guide):
    if guide is None:
        return np.zeros(n_vars), 0.0, 0.9, 1e-12
    if len(guide.pattern) != n_vars:
        raise ValueError("guide pattern length mismatch")
    return guide.signs(), float(guide.h0), float(guide.decay), float(guide.floor)


def bp_step(graph, potentials, messages, evidence=None, guide=None, guide_h=None, config=None):
    """One full sweep; returns the updated MessageSet.

    guide supplies the bias pattern; its current amplitude is guide_h when
    given, else the schedule's h0.  The sequential shuffle is drawn fresh
    from config.seed on every call, so iterated stepping is reproducible
    but not identical to the continuous stream used by run_bp.
    """
    config = config or BpConfig()
    ws = _Workspace(graph, potentials)
    obs = _evidence_array(graph.n_vars, evidence)
    pattern, h0, _, _ = _guide_arrays(graph.n_vars, guide)
    h = float(guide_h) if guide_h is not None else h0
    u = messages.fields()
    fld = ws.base_field + h * pattern if h > 0.0 else ws.base_field.copy()
    scratch = np.empty(graph.n_vars)
    order = np.arange(2 * graph.n_edges, dtype=np.int64)
    _kernels.sweep(
        ws.var_of,
        ws.opp_var_of,
        ws.tj,
        ws.loc_t,
        ws.loc_o,
        fld,
        obs,
        u,
        scratch,
        float(config.damping),
        config.schedule == "synchronous",
        order,
        np.uint64(config.seed),
    )
    return MessageSet.from_fields(u)


def run_bp(graph, potentials, config=None, messages=None, evidence=None, guide=None):
    """Iterate sweeps until the field change drops below config.tol.

    Guided runs only report convergence once the guide amplitude has
    decayed below its floor.  Returns (MessageSet, BeliefSet, RunStatus).
    """
    config = config or BpConfig()
    ws = _Workspace(graph, potentials)
    obs = _evidence_array(graph.n_vars, evidence)
    pattern, h0, decay, floor = _guide_arrays(graph.n_vars, guide)
    u = (messages or uniform_messages(graph)).fields()
    converged, iters, change = _kernels.run(
        ws.var_of,
        ws.opp_var_of,
        ws.tj,
        ws.loc_t,
        ws.loc_o,
        ws.base_field,
        obs,
        pattern,
        h0,
        decay,
        floor,
        u,
        float(config.damping),
        config.schedule == "synchronous",
        float(config.tol),
        int(config.max_iters),
        np.uint64(config.seed),
    )
    final = MessageSet.from_fields(u)
    beliefs = compute_beliefs(graph, potentials, final, evidence)
    return final, beliefs, RunStatus(bool(converged), int(iters), float(change))


def compute_beliefs(graph, potentials, messages, evidence=None):
    """Beliefs b_i and b_a induced by a message set.

    Observed variables get one-hot singles, and the incompatible rows of
    their incident pair beliefs are zeroed, matching the conditioned
    update rule.
    """
    n = graph.n_vars
    e = graph.edges
    obs = _evidence_array(n, evidence)
    phi = potentials.phi
    psi = potentials.psi

    log_m = np.log(clamp_probs(messages.values))
    log_b = np.log(phi).copy()
    np.add.at(log_b, e[:, 0], log_m[0::2])
    np.add.at(log_b, e[:, 1], log_m[1::2])
    z_singles = np.exp(log_b).sum(axis=1)
    shift = log_b.max(axis=1, keepdims=True)
    singles = np.exp(log_b - shift)
    singles /= singles.sum(axis=1, keepdims=True)

    # n_{i->a} as log tables: full product with the a-term divided out
    log_n_lo = log_b[e[:, 0]] - log_m[0::2]
    log_n_hi = log_b[e[:, 1]] - log_m[1::2]
    log_pairs = (
        np.log(psi) + log_n_lo[:, :, None] + log_n_hi[:, None, :]
    )
    z_pairs = np.exp(log_pairs).sum(axis=(1, 2))
    shift = log_pairs.max(axis=(1, 2), keepdims=True)
    pairs = np.exp(log_pairs - shift)

    observed = obs >= 0
    if np.any(observed):
        idx = np.nonzero(observed)[0]
        singles[idx] = 0.0
        singles[idx, obs[idx]] = 1.0
        for k in range(len(e)):
            i, j = e[k]
            if observed[i]:
                pairs[k, 1 - obs[i], :] = 0.0
            if observed[j]:
                pairs[k, :, 1 - obs[j]] = 0.0
    tot = pairs.sum(axis=(1, 2), keepdims=True)
    # evidence zeroing can empty a table whose other cells underflowed at
    # extreme tempering; keep it all-zero instead of dividing 0 by 0
    pairs /= np.where(tot > 0.0, tot, 1.0)
    return BeliefSet(singles, pairs, e, z_singles, z_pairs)


def gbp_step(graph, potentials, messages, counting, config=None):
    """One sweep of the counting-number generalization.

    Messages here are kept in the representation that coincides with the
    plain BP messages when the counting numbers are the standard reduction
    (h_a = 1, h_i = 1 - d_i, e = 1); in that case the sweep is identical
    to bp_step.
    """
    config = config or BpConfig()
    ws = _Workspace(graph, potentials, counting)
    u = messages.fields()
    scratch = np.empty(graph.n_vars)
    order = np.arange(2 * graph.n_edges, dtype=np.int64)
    _kernels.gbp_sweep(
        ws.var_of,
        ws.opp_var_of,
        ws.tj,
        ws.loc_t,
        ws.loc_o,
        ws.base_field,
        ws.hfac,
        ws.denom,
        u,
        scratch,
        float(config.damping),
        config.schedule == "synchronous",
        order,
        np.uint64(config.seed),
    )
    return MessageSet.from_fields(u)


def run_gbp(graph, potentials, counting, config=None, messages=None):
    config = config or BpConfig()
    ws = _Workspace(graph, potentials, counting)
    u = (messages or uniform_messages(graph)).fields()
    converged, iters, change = _kernels.gbp_run(
        ws.var_of,
        ws.opp_var_of,
        ws.tj,
        ws.loc_t,
        ws.loc_o,
        ws.base_field,
        ws.hfac,
        ws.denom,
        u,
        float(config.damping),
        config.schedule == "synchronous",
        float(config.tol),
        int(config.max_iters),
        np.uint64(config.seed),
    )
    final = MessageSet.from_fields(u)
    beliefs = gbp_beliefs(graph, potentials, final, counting)
    return final, beliefs, RunStatus(bool(converged), int(iters), float(change))


def gbp_beliefs(graph, potentials, messages, counting):
    """Beliefs of the counting-number scheme.

    In field form, with S_i = e_i f_i + sum_a h_a u_{a->i} and
    D_i = h_i + sum_a h_a, the cavity field of i toward a is
    S_i / D_i - u_{a->i}, the pair belief is
    psi^(e_a/h_a) * exp(s_i (S_i/D_i - u_{a->i}) + s_j (...)), and the
    single belief field is (e_i f_i - sum_a h_a (S_i/D_i - u_{a->i})) / h_i.
    Variables with h_i = 0 take their single belief by marginalizing an
    incident pair belief instead.
    """
    n = graph.n_vars
    e = graph.edges
    u = messages.fields()
    f = _single_fields(potentials.phi)
    ef = counting.e_vars * f
    s_acc = ef.copy()
    hu = np.repeat(counting.h_factors, 2) * u
    np.add.at(s_acc, e[:, 0], hu[0::2])
    np.add.at(s_acc, e[:, 1], hu[1::2])
    den = counting.denominators(graph)
    if np.any(den == 0):
        raise ValueError("h_i plus incident h_a sums must be nonzero")
    g = s_acc / den

    cav_lo = g[e[:, 0]] - u[0::2]
    cav_hi = g[e[:, 1]] - u[1::2]
    ratio = counting.e_factors / counting.h_factors
    log_psi_eff = ratio[:, None, None] * np.log(potentials.psi)
    sgn = np.array([-1.0, 1.0])
    log_pairs = (
        log_psi_eff
        + (cav_lo[:, None] * sgn)[:, :, None]
        + (cav_hi[:, None] * sgn)[:, None, :]
    )
    z_pairs = np.exp(log_pairs).sum(axis=(1, 2))
    shift = log_pairs.max(axis=(1, 2), keepdims=True)
    pairs = np.exp(log_pairs - shift)
    pairs /= pairs.sum(axis=(1, 2), keepdims=True)

    acc = np.zeros(n)
    np.add.at(acc, e[:, 0], counting.h_factors * cav_lo)
    np.add.at(acc, e[:, 1], counting.h_factors * cav_hi)
    singles = np.empty((n, 2))
    degenerate = np.abs(counting.h_vars) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        h_field = (ef - acc) / counting.h_vars
    t = np.tanh(h_field)
    singles[:, 1] = (1.0 + t) / 2.0
    singles[:, 0] = (1.0 - t) / 2.0
    if np.any(degenerate):
        first_edge = np.full(n, -1, dtype=np.int64)
        for k in range(len(e) - 1, -1, -1):
            first_edge[e[k, 0]] = k
            first_edge[e[k, 1]] = k
        for i in np.nonzero(degenerate)[0]:
            k = first_edge[i]
            if k < 0:
                raise ValueError(f"variable {i} has h_i = 0 and no incident factor")
            singles[i] = pairs[k].sum(axis=1) if e[k, 0] == i else pairs[k].sum(axis=0)
    z_singles = np.ones(n)
    return BeliefSet(singles, pairs, e, z_singles, z_pairs)


def _xlogx(p):
    out = np.zeros_like(p)
    mask = p > 0
    out[mask] = p[mask] * np.log(p[mask])
    return out


def bethe_free_energy(graph, potentials, beliefs, counting=None):
    """Region-based free energy of a belief set; 0 log 0 is taken as 0.

    With the default counting numbers this is the Bethe free energy
    F = sum_a (E_a - H_a) + sum_i (E_i - (1 - d_i) H_i); on a tree it
    equals -log Z at the exact marginals.
    """
    if counting is None:
        counting = CountingNumbers.standard(graph)
    phi = np.log(potentials.phi)
    psi = np.log(potentials.psi)
    b_i = beliefs.singles
    b_a = beliefs.pairs
    e_i = -(b_i * phi).sum(axis=1)
    e_a = -(b_a * psi).sum(axis=(1, 2))
    h_i = -_xlogx(b_i).sum(axis=1)
    h_a = -_xlogx(b_a).sum(axis=(1, 2))
    return float(
        np.dot(counting.e_factors, e_a)
        - np.dot(counting.h_factors, h_a)
        + np.dot(counting.e_vars, e_i)
        - np.dot(counting.h_vars, h_i)
    )


@dataclass(frozen=True)
class FixedPointGroup:
    label: str
    count: int
    representative: int
    free_energy: float | None = None


@dataclass(frozen=True)
class ClassifiedFixedPoints:
    labels: list
    groups: list

    @property
    def n_distinct(self):
        return len(self.groups)

    def count(self, prefix):
        return sum(1 for lab in self.labels if lab.startswith(prefix))

    def distinct_count(self, prefix):
        return sum(1 for g in self.groups if g.label.startswith(prefix))


def classify_fixed_points(
    belief_sets,
    patterns,
    match_threshold=0.05,
    message_sets=None,
    dedup_tol=1e-6,
    free_energies=None,
):
    """Label converged fixed points against mixture patterns.

    patterns is (C, N) with entry p_i^c(1).  A point whose mean absolute
    single-belief distance to exactly one pattern (or its complement) is
    below match_threshold is labeled pattern(c) or antipattern(c); two
    candidate matches give ambiguous, none give spurious.  Distinct points
    are counted by single-linkage clustering with sup-norm message
    distance below dedup_tol (belief distance when messages are absent).
    """
    patterns = np.asarray(patterns, dtype=float)
    labels = []
    for bs in belief_sets:
        b1 = bs.singles[:, 1]
        d_pat = np.mean(np.abs(b1[None, :] - patterns), axis=1)
        d_anti = np.mean(np.abs(b1[None, :] - (1.0 - patterns)), axis=1)
        hits = [("pattern", c, d_pat[c]) for c in range(len(patterns)) if d_pat[c] < match_threshold]
        hits += [("antipattern", c, d_anti[c]) for c in range(len(patterns)) if d_anti[c] < match_threshold]
        if len(hits) == 1:
            kind, c, _ = hits[0]
            labels.append(f"{kind}({c})")
        elif len(hits) == 0:
            labels.append("spurious")
        else:
            labels.append("ambiguous")

    n = len(belief_sets)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(n):
        for b in range(a + 1, n):
            if message_sets is not None:
                dist = message_sets[a].max_distance(message_sets[b])
            else:
                dist = float(np.max(np.abs(belief_sets[a].singles - belief_sets[b].singles)))
            if dist < dedup_tol:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[rb] = ra
    reps = {}
    for a in range(n):
        r = find(a)
        reps.setdefault(r, []).append(a)
    groups = []
    for r, members in sorted(reps.items()):
        fe = None
        if free_energies is not None:
            fe = float(free_energies[r])
        groups.append(FixedPointGroup(labels[r], len(members), r, fe))
    return ClassifiedFixedPoints(labels, groups)


def write_beliefs_csv(beliefs, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("variable,b0,b1\n")
        for i, row in enumerate(beliefs.singles):
            f.write(f"{i},{row[0]:.17g},{row[1]:.17g}\n")
    finally:
        if own:
            f.close()


def write_fixed_points_csv(classified, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("label,count,free_energy\n")
        for g in classified.groups:
            fe = "" if g.free_energy is None else f"{g.free_energy:.17g}"
            f.write(f"{g.label},{g.count},{fe}\n")
    finally:
        if own:
            f.close()
