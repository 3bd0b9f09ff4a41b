import io

import numpy as np
import pytest

from beliefmix import (
    AlphaModel,
    CmaesConfig,
    QuantileModel,
    clamp_probs,
    cmaes_minimize,
    decode_quantile_genome,
    exact_pair_stats,
    fitness_global,
    fitness_surrogate,
    generate_mixture,
    grid_weights,
    h_max_for_variance,
    optimize_quantiles,
    write_trace_csv,
)


def sphere(x):
    return float(np.sum((x - 0.3) ** 2))


def test_sphere_10d():
    cfg = CmaesConfig(max_evals=10_000, target=1e-10, seed=0)
    res = cmaes_minimize(lambda x: float(np.sum(x * x)), np.ones(10), 0.5, cfg)
    assert res.value < 1e-9
    assert res.n_evals <= 10_000


def test_rosenbrock_2d():
    def rosen(x):
        return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)

    cfg = CmaesConfig(max_evals=50_000, target=1e-10, seed=0)
    res = cmaes_minimize(rosen, np.array([-1.2, 1.0]), 0.5, cfg)
    assert res.value < 1e-9
    assert np.abs(res.x - 1.0).max() < 1e-4


def test_scale_equivariance():
    cfg = CmaesConfig(max_evals=300, seed=4)
    seen_a, seen_b = [], []

    def fa(x):
        v = sphere(x)
        seen_a.append(v)
        return v

    def fb(x):
        v = sphere(2.0 * x)
        seen_b.append(v)
        return v

    x0 = np.array([1.0, -0.5, 0.25, 2.0])
    ra = cmaes_minimize(fa, x0, 0.5, cfg)
    rb = cmaes_minimize(fb, 0.5 * x0, 0.25, cfg)
    assert seen_a == seen_b
    assert ra.value == rb.value
    assert np.array_equal(ra.x, 2.0 * rb.x)


def test_rank_invariance():
    cfg = CmaesConfig(max_evals=400, seed=5)
    pts_a, pts_b = [], []

    def fa(x):
        pts_a.append(x.copy())
        return sphere(x)

    def fb(x):
        pts_b.append(x.copy())
        return float(np.log1p(sphere(x)))

    x0 = np.full(3, 1.5)
    cmaes_minimize(fa, x0, 0.4, cfg)
    cmaes_minimize(fb, x0, 0.4, cfg)
    assert len(pts_a) == len(pts_b)
    for a, b in zip(pts_a, pts_b):
        assert np.array_equal(a, b)


def test_constant_objective_terminates():
    cfg = CmaesConfig(max_evals=2_000, seed=6)
    res = cmaes_minimize(lambda x: 42.0, np.zeros(4), 0.3, cfg)
    assert res.value == 42.0
    assert res.stop in ("max-evals", "sigma")


def test_nonfinite_values_ranked_worst():
    def partial(x):
        if np.any(x < 0.0):
            return float("nan")
        return float(np.sum((x - 0.5) ** 2))

    cfg = CmaesConfig(max_evals=6_000, target=1e-10, seed=7)
    res = cmaes_minimize(partial, np.full(4, 1.2), 0.4, cfg)
    assert res.value < 1e-6


def test_bounds_keep_best_inside_box():
    lower = np.zeros(3)
    upper = np.full(3, 2.0)

    def outside(x):
        return float(np.sum((x + 1.0) ** 2))

    for mode in ("reflection", "penalty"):
        cfg = CmaesConfig(max_evals=4_000, seed=8, bound_handling=mode)
        res = cmaes_minimize(outside, np.full(3, 1.0), 0.4, cfg,
                             bounds=(lower, upper))
        assert np.all(res.x >= lower - 1e-9)
        assert np.all(res.x <= upper + 1e-9)
        assert np.abs(res.x).max() < 0.05


def test_deterministic_under_seed():
    cfg = CmaesConfig(max_evals=500, seed=9)
    a = cmaes_minimize(sphere, np.ones(4), 0.5, cfg)
    b = cmaes_minimize(sphere, np.ones(4), 0.5, cfg)
    assert np.array_equal(a.x, b.x)
    assert a.value == b.value
    assert a.n_evals == b.n_evals


def test_trace_monotone_and_csv():
    cfg = CmaesConfig(max_evals=600, seed=10)
    res = cmaes_minimize(sphere, np.ones(5), 0.5, cfg)
    assert np.all(np.diff(res.trace.best) <= 0)

    buf = io.StringIO()
    write_trace_csv(res.trace, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "generation,best,median,sigma"
    buf2 = io.StringIO()
    write_trace_csv(res.trace, buf2)
    assert buf2.getvalue() == text


def test_grid_weights_values_and_errors():
    w = grid_weights(np.array([0.1, 0.3, 0.5]))
    want = np.array([0.9 * 0.1, 0.7 * 0.2, 0.5 * 0.1])
    assert np.abs(w - want).max() < 1e-15
    with pytest.raises(ValueError):
        grid_weights(np.array([0.5]))
    with pytest.raises(ValueError):
        grid_weights(np.array([0.1, 0.1, 0.5]))


def test_decode_quantile_genome_always_valid():
    rng = np.random.default_rng(11)
    for _ in range(50):
        genome = rng.uniform(-50.0, 50.0, size=8)
        model = decode_quantile_genome(genome, 4, r_max=0.5)
        assert isinstance(model, QuantileModel)
        assert np.all(model.alphas > 0)
        assert np.all(np.diff(model.quantiles) > 0)
        assert model.quantiles[0] > 0
        assert model.quantiles[-1] == 0.5

    model = decode_quantile_genome(np.array([np.log(0.3), 0.7]), 1)
    assert abs(model.alphas[0] - 0.3) < 1e-12
    assert model.quantiles[-1] == 1.0
    with pytest.raises(ValueError):
        decode_quantile_genome(np.zeros(3), 2)


def test_fitness_global_zero_for_exact_model():
    # one component: the tempered model is exact at any alpha
    mix = generate_mixture(12, 1, h_max_for_variance(0.15), seed=12)
    f = fitness_global(AlphaModel(0.8), mix, rho_grid=[0.1, 0.4, 0.7],
                       n_seeds=2)
    assert f < 1e-10


def test_fitness_global_prefers_informative_alpha():
    mix = generate_mixture(30, 2, h_max_for_variance(0.15), seed=13)
    kw = dict(rho_grid=[0.1, 0.3, 0.5], n_seeds=2, seed=0)
    weak = fitness_global(AlphaModel(1e-6), mix, **kw)
    tuned = fitness_global(AlphaModel(0.6), mix, **kw)
    assert tuned < weak


def test_fitness_surrogate_alpha_zero_constant():
    mix = generate_mixture(20, 3, h_max_for_variance(0.15), seed=14)
    got = fitness_surrogate(AlphaModel(1e-9), mix, seed=0)
    # guided runs all land on the independent fixed point p-hat
    stats = exact_pair_stats(mix)
    b1 = clamp_probs(stats.singles[:, 1])
    want = 0.0
    for c in range(3):
        p1 = clamp_probs(mix.p[c])
        want += np.mean(b1 * np.log(b1 / p1)
                        + (1.0 - b1) * np.log((1.0 - b1) / (1.0 - p1)))
    want /= 3.0
    assert abs(got - want) < 1e-6


def test_optimize_single_bin_recovers_best_alpha():
    mix = generate_mixture(30, 2, h_max_for_variance(0.15), seed=15)
    alphas = np.geomspace(0.02, 3.0, 40)
    scan = [fitness_surrogate(AlphaModel(float(a)), mix, seed=0)
            for a in alphas]
    best = float(alphas[int(np.argmin(scan))])

    cfg = CmaesConfig(max_evals=150, seed=3)
    model, res = optimize_quantiles(mix, 1, r_max=1.0, config=cfg,
                                    fitness_seed=0)
    assert model.quantiles[-1] == 1.0
    assert abs(model.alphas[0] - best) <= 0.05
    assert res.value <= min(scan) + 1e-6


def test_optimize_respects_r_max():
    mix = generate_mixture(24, 2, h_max_for_variance(0.15), seed=16)
    cfg = CmaesConfig(max_evals=60, seed=4)
    model, _ = optimize_quantiles(mix, 2, r_max=0.5, config=cfg,
                                  fitness_seed=0)
    assert model.quantiles[-1] <= 0.5
    assert model.q_parts == 2
