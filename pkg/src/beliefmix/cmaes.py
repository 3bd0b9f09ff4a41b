"""CMA-ES minimizer and fitness functions for quantile model search.

The optimizer is a plain (mu/mu_w, lambda) evolution strategy with
cumulative step-size adaptation and rank-one plus rank-mu covariance
updates.  It only consumes fitness ranks, so any strictly increasing
transform of the objective leaves the search trajectory unchanged, and
all internal state lives in the sampling coordinates, which makes the
run scale-equivariant under a matched rescaling of (x0, sigma0).

Two objectives score a model against a product mixture: the global
fitness integrates the decimation divergence curve with weight (1 - rho),
and the cheaper surrogate sums per-component divergences of guided
fixed points at rho = 0.  The surrogate drives the search; the global
score is a validation number.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ._parallel import thread_map
from .bp import BpConfig, GuideSchedule, run_bp, uniform_messages
from .encode import QuantileModel
from .factor_graph import clamp_probs
from .mixture import build_model_potentials, run_decimation

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class CmaesConfig:
    """Strategy parameters; None picks the standard dimension defaults."""

    population: Optional[int] = None
    parents: Optional[int] = None
    sigma0: float = 0.5
    max_evals: int = 10000
    target: Optional[float] = None
    seed: int = 0
    bound_handling: str = "penalty"

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")
        if self.bound_handling not in ("penalty", "reflection"):
            raise ValueError(f"unknown bound handling {self.bound_handling!r}")

    def resolve(self, n_dim):
        lam = self.population
        if lam is None:
            lam = 4 + int(3 * np.log(n_dim))
        if lam < 4:
            raise ValueError("population must be at least 4")
        mu = self.parents
        if mu is None:
            mu = lam // 2
        if not 1 <= mu <= lam // 2:
            raise ValueError("parents must lie in [1, population/2]")
        return lam, mu


@dataclass
class OptimizationTrace:
    """Per-generation progress; best is the running minimum."""

    best: np.ndarray
    median: np.ndarray
    sigma: np.ndarray
    genomes: np.ndarray
    final_genome: np.ndarray
    final_global: Optional[float] = None

    @property
    def n_generations(self):
        return len(self.best)


@dataclass(frozen=True)
class CmaesResult:
    x: np.ndarray
    value: float
    trace: OptimizationTrace
    n_evals: int
    stop: str


def _reflect(x, lower, upper):
    # fold into the box with mirror periodicity 2 * width
    width = upper - lower
    t = np.mod(x - lower, 2.0 * width)
    return lower + np.minimum(t, 2.0 * width - t)


class _Bounds:
    def __init__(self, bounds, n_dim, mode):
        self.mode = mode
        if bounds is None:
            self.lower = None
            self.upper = None
            return
        lower, upper = bounds
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (n_dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (n_dim,)).copy()
        if not np.all(self.upper > self.lower):
            raise ValueError("upper bounds must exceed lower bounds")

    def repair(self, x):
        """Returns (point to evaluate, penalty, point to keep for the update)."""
        if self.lower is None:
            return x, 0.0, x
        if self.mode == "reflection":
            fixed = _reflect(x, self.lower, self.upper)
            return fixed, 0.0, fixed
        clipped = np.clip(x, self.lower, self.upper)
        scale = self.upper - self.lower
        pen = float(np.sum(((x - clipped) / scale) ** 2))
        return clipped, 1e4 * pen, x


def cmaes_minimize(objective, x0, sigma0=None, config=None, bounds=None,
                   threads=None):
    """Minimize objective from x0; returns CmaesResult.

    objective maps a 1-D point to a float; non-finite values are ranked
    worst.  bounds is an optional (lower, upper) box handled per
    config.bound_handling.  Stops on target fitness, evaluation budget,
    or step-size collapse below 1e-14.
    """
    config = config or CmaesConfig()
    mean = np.asarray(x0, dtype=float).copy()
    n = mean.size
    sigma = float(sigma0 if sigma0 is not None else config.sigma0)
    if sigma <= 0:
        raise ValueError("sigma0 must be positive")
    lam, mu = config.resolve(n)
    box = _Bounds(bounds, n, config.bound_handling)

    raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mu_w = 1.0 / np.sum(weights ** 2)
    c_sigma = (mu_w + 2.0) / (n + mu_w + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, np.sqrt((mu_w - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_w / n) / (n + 4.0 + 2.0 * mu_w / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_w)
    c_mu = min(1.0 - c_1, 2.0 * (mu_w - 2.0 + 1.0 / mu_w) / ((n + 2.0) ** 2 + mu_w))
    chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n ** 2))

    rng = np.random.default_rng(config.seed)
    cov = np.eye(n)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)

    best_x = mean.copy()
    best_val = np.inf
    n_evals = 0
    gen = 0
    stop = "max-evals"
    hist_best, hist_median, hist_sigma, hist_genome = [], [], [], []

    while n_evals < config.max_evals:
        vals_d, vecs = np.linalg.eigh(cov)
        vals_d = np.maximum(vals_d, 1e-300)
        d_diag = np.sqrt(vals_d)
        inv_sqrt = (vecs / d_diag) @ vecs.T

        z = rng.standard_normal((lam, n))
        y = z @ (vecs * d_diag).T
        x = mean + sigma * y

        evals, pens, keeps = [], [], []
        for k in range(lam):
            pt, pen, keep = box.repair(x[k])
            evals.append(pt)
            pens.append(pen)
            keeps.append(keep)
        fvals = np.asarray(thread_map(objective, evals, threads=threads), dtype=float)
        fvals = fvals + np.asarray(pens)
        n_evals += lam
        gen += 1

        ranked = np.where(np.isfinite(fvals), fvals, np.inf)
        order = np.argsort(ranked, kind="stable")
        gen_best = float(ranked[order[0]])
        if gen_best < best_val:
            best_val = gen_best
            best_x = np.asarray(evals[order[0]], dtype=float).copy()

        hist_best.append(best_val)
        hist_median.append(float(np.median(ranked)))
        hist_sigma.append(sigma)
        hist_genome.append(best_x.copy())

        if config.target is not None and best_val <= config.target:
            stop = "target"
            break

        sel = order[:mu]
        y_sel = np.stack([(np.asarray(keeps[k]) - mean) / sigma for k in sel])
        y_w = weights @ y_sel
        mean = mean + sigma * y_w

        p_sigma = (1.0 - c_sigma) * p_sigma + np.sqrt(
            c_sigma * (2.0 - c_sigma) * mu_w) * (inv_sqrt @ y_w)
        norm_ps = float(np.linalg.norm(p_sigma))
        h_sig = norm_ps / np.sqrt(1.0 - (1.0 - c_sigma) ** (2 * gen)) < (
            1.4 + 2.0 / (n + 1.0)) * chi_n
        p_c = (1.0 - c_c) * p_c + (
            np.sqrt(c_c * (2.0 - c_c) * mu_w) * y_w if h_sig else 0.0)

        rank_mu = (y_sel.T * weights) @ y_sel
        cov = ((1.0 - c_1 - c_mu) * cov
               + c_1 * (np.outer(p_c, p_c)
                        + (0.0 if h_sig else c_c * (2.0 - c_c)) * cov)
               + c_mu * rank_mu)
        cov = 0.5 * (cov + cov.T)
        sigma = sigma * float(np.exp(min(20.0, (c_sigma / d_sigma)
                                         * (norm_ps / chi_n - 1.0))))
        if sigma < 1e-14:
            stop = "sigma"
            break

    trace = OptimizationTrace(
        best=np.asarray(hist_best),
        median=np.asarray(hist_median),
        sigma=np.asarray(hist_sigma),
        genomes=np.asarray(hist_genome),
        final_genome=best_x.copy(),
    )
    return CmaesResult(x=best_x, value=best_val, trace=trace,
                       n_evals=n_evals, stop=stop)


def grid_weights(rho_grid):
    """Trapezoid cell widths times (1 - rho) for the global fitness."""
    rho = np.asarray(rho_grid, dtype=float)
    if rho.ndim != 1 or rho.size < 2:
        raise ValueError("need a 1-D grid with at least two points")
    if np.any(np.diff(rho) <= 0):
        raise ValueError("rho grid must be strictly increasing")
    cell = np.empty_like(rho)
    cell[0] = 0.5 * (rho[1] - rho[0])
    cell[-1] = 0.5 * (rho[-1] - rho[-2])
    cell[1:-1] = 0.5 * (rho[2:] - rho[:-2])
    return (1.0 - rho) * cell


def fitness_global(model, mixture, rho_grid=None, n_seeds=3, seed=0,
                   config=None, mode="geometric", mean_degree=None,
                   threads=None):
    """Weighted decimation-divergence integral; lower is better.

    Averages D_KL(rho) over seeds and components, substituting log 2 per
    variable for non-converged runs, then sums with weights
    (1 - rho_k) * trapezoid cell width.
    """
    curve = run_decimation(mixture, model, rho_grid=rho_grid, n_seeds=n_seeds,
                           seed=seed, config=config, mode=mode,
                           mean_degree=mean_degree, threads=threads)
    dkl = np.where(curve.converged, curve.raw_dkl, LOG2)
    per_rho = dkl.mean(axis=(1, 2))
    return float(grid_weights(curve.rho) @ per_rho)


def _component_kl(beliefs, mixture, c):
    # mean per-site KL of beliefs against the component's own marginals
    b1 = clamp_probs(beliefs.singles[:, 1])
    p1 = clamp_probs(mixture.p[c])
    return float(np.mean(b1 * np.log(b1 / p1)
                         + (1.0 - b1) * np.log((1.0 - b1) / (1.0 - p1))))


def fitness_surrogate(model, mixture, guide_h0=1.0, guide_decay=0.9,
                      config=None, seed=0, mode="geometric",
                      mean_degree=None, threads=None):
    """Mean over components of the guided fixed point's divergence.

    Each component gets one guided run with all variables hidden; the
    converged beliefs are scored against that component's marginals and
    non-convergence contributes log 2 per variable.
    """
    config = config or BpConfig(max_iters=450, tol=1e-7)
    potentials, graph, _ = build_model_potentials(
        mixture, model, mode=mode, mean_degree=mean_degree)
    patterns = mixture.optimal_patterns()

    def one(c):
        bp_seed = int(np.random.SeedSequence(seed, spawn_key=(c,))
                      .generate_state(1, dtype=np.uint64)[0])
        guide = GuideSchedule(pattern=patterns[c], h0=guide_h0,
                              decay=guide_decay)
        msgs = uniform_messages(graph)
        _, beliefs, status = run_bp(graph, potentials,
                                    config=replace(config, seed=bp_seed),
                                    messages=msgs, guide=guide)
        if not status.converged:
            return LOG2
        return _component_kl(beliefs, mixture, c)

    vals = thread_map(one, range(mixture.n_components), threads=threads)
    return float(np.mean(vals))


def decode_quantile_genome(genome, q_parts, r_max=1.0, criterion="simple"):
    """Maps a free 2q vector to a valid quantile model.

    First q entries are log temper exponents; the rest pass through a
    softmax cumulative sum so the quantiles are strictly increasing and
    capped at r_max.
    """
    genome = np.asarray(genome, dtype=float)
    if genome.shape != (2 * q_parts,):
        raise ValueError(f"genome must have length {2 * q_parts}")
    alphas = np.exp(genome[:q_parts])
    g = genome[q_parts:]
    shifted = np.exp(g - g.max())
    probs = shifted / shifted.sum()
    # floor keeps increments above float resolution for extreme genomes
    probs = (1.0 - 1e-8) * probs + 1e-8 / q_parts
    quantiles = r_max * np.cumsum(probs)
    quantiles[-1] = r_max
    return QuantileModel(alphas=alphas, quantiles=quantiles,
                         criterion=criterion)


def optimize_quantiles(mixture, q_parts, criterion="simple", r_max=1.0,
                       config=None, mode="geometric", mean_degree=None,
                       guide_h0=1.0, guide_decay=0.9, bp_config=None,
                       fitness_seed=0, x0=None, threads=None,
                       global_rho_grid=None, global_seeds=3):
    """Search quantile models by surrogate fitness; returns (model, trace).

    The genome is (ln alpha_1..q, g_1..q) with quantiles rebuilt through
    decode_quantile_genome.  When global_rho_grid is given the winning
    model is re-scored with fitness_global and the value stored on the
    trace.
    """
    if q_parts < 1:
        raise ValueError("q_parts must be at least 1")
    config = config or CmaesConfig()
    if x0 is None:
        x0 = np.zeros(2 * q_parts)
    n = 2 * q_parts
    lower = np.concatenate([np.full(q_parts, np.log(1e-4)), np.full(q_parts, -15.0)])
    upper = np.concatenate([np.full(q_parts, np.log(1e2)), np.full(q_parts, 15.0)])

    def objective(genome):
        model = decode_quantile_genome(genome, q_parts, r_max, criterion)
        return fitness_surrogate(model, mixture, guide_h0=guide_h0,
                                 guide_decay=guide_decay, config=bp_config,
                                 seed=fitness_seed, mode=mode,
                                 mean_degree=mean_degree)

    result = cmaes_minimize(objective, x0, config.sigma0, config,
                            bounds=(lower, upper), threads=threads)
    model = decode_quantile_genome(result.x, q_parts, r_max, criterion)
    if global_rho_grid is not None:
        result.trace.final_global = fitness_global(
            model, mixture, rho_grid=global_rho_grid, n_seeds=global_seeds,
            seed=fitness_seed, mode=mode, mean_degree=mean_degree,
            threads=threads)
    return model, result


def write_trace_csv(trace, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("generation,best,median,sigma\n")
        for g in range(trace.n_generations):
            f.write(f"{g},{trace.best[g]:.17g},{trace.median[g]:.17g},"
                    f"{trace.sigma[g]:.17g}\n")
    finally:
        if own:
            f.close()
