import io

import numpy as np
import pytest

from beliefmix import (
    MFParams,
    MFState,
    ags_residual,
    decimated_params,
    dkl_rho1,
    finite_c_residual,
    generate_mixture,
    h_max_for_variance,
    mf_decimation_dkl,
    mf_dkl_curve,
    phase_boundaries,
    solve_ags,
    solve_branches,
    solve_finite_c,
    tune_alpha_of_rho,
    w_of_beta,
    write_mf_dkl_csv,
    write_phase_csv,
)


def two_point_kl(t_belief, t_ref):
    """KL between +-1 spin marginals with means t_belief and t_ref."""
    p = np.array([(1.0 - t_belief) / 2.0, (1.0 + t_belief) / 2.0])
    q = np.array([(1.0 - t_ref) / 2.0, (1.0 + t_ref) / 2.0])
    return float((p * np.log(p / q)).sum())


def test_ags_paramagnetic_below_critical():
    st = solve_ags(MFParams(0.8, 1e-12), init=(0.5, 0.2))
    assert st.converged
    assert abs(st.mu[0]) < 1e-8
    assert st.q < 1e-8


def test_ags_zero_load_matches_scalar_equation():
    # at eta -> 0 the overlap solves mu = tanh(beta mu)
    lo, hi = 0.5, 0.99
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.tanh(1.5 * mid) > mid:
            lo = mid
        else:
            hi = mid
    st = solve_ags(MFParams(1.5, 1e-12), init=(0.9, 0.9))
    assert st.converged
    assert abs(st.mu[0] - lo) < 1e-6


def test_ags_mattis_branch_frozen():
    params = MFParams(1.6, 0.01)
    st = solve_ags(params, init=(0.9, 0.9))
    assert st.converged
    assert abs(st.mu[0] - 0.87623848) < 1e-6
    assert abs(st.q - 0.77057884) < 1e-6
    assert abs(st.r - 1.92358333) < 1e-6
    assert ags_residual(params, st) < 1e-8


def test_ags_sign_symmetry():
    params = MFParams(1.6, 0.01)
    plus = solve_ags(params, init=(0.9, 0.9))
    minus = solve_ags(params, init=(-0.9, 0.9))
    assert abs(plus.mu[0] + minus.mu[0]) < 1e-10
    assert abs(plus.q - minus.q) < 1e-10
    assert abs(plus.r - minus.r) < 1e-10


def test_ags_quadrature_doubling():
    a = solve_ags(MFParams(1.6, 0.01, quad_order=40), init=(0.9, 0.9))
    b = solve_ags(MFParams(1.6, 0.01, quad_order=80), init=(0.9, 0.9))
    assert abs(a.mu[0] - b.mu[0]) < 1e-9
    assert abs(a.q - b.q) < 1e-9


def test_solve_branches_by_phase():
    # above T_g: everything decays to the paramagnetic point
    high = solve_branches(MFParams(0.8, 0.01))
    assert len(high) >= 1
    for st in high.values():
        assert abs(st.mu).max() < 1e-6
        assert st.q < 1e-6

    # inside the spin-glass band 1 - sqrt(eta) < T < 1 + sqrt(eta)
    band = solve_branches(MFParams(1.0 / 0.95, 0.01))
    assert any(abs(s.mu).max() < 1e-6 and s.q > 0.01 for s in band.values())

    # low temperature: retrieval branch coexists with a mu = 0 point
    low = solve_branches(MFParams(1.6, 0.01))
    assert any(s.mu.max() > 0.8 for s in low.values())
    assert any(abs(s.mu).max() < 1e-6 for s in low.values())
    for st in low.values():
        assert ags_residual(MFParams(1.6, 0.01), st) < 1e-8


def test_decimated_params_substitution():
    p = MFParams(1.25, 0.04, v=0.15, rho=0.5, field_scale=2.0)
    d = decimated_params(p)
    assert abs(d.beta - 0.625) < 1e-15
    assert abs(d.eta - 0.08) < 1e-15
    # substituted beta * h reproduces beta * field_scale * rho * sqrt(v)
    assert abs(d.beta * d.h[0] - 1.25 * 2.0 * 0.5 * np.sqrt(0.15)) < 1e-14

    same = decimated_params(MFParams(1.25, 0.04, v=0.15, rho=0.0))
    assert same.beta == 1.25 and same.eta == 0.04

    with pytest.raises(ValueError):
        decimated_params(MFParams(1.25, 0.04, v=0.15), rho=1.0)


def test_finite_c_small_beta_stays_near_zero():
    # the -2 sqrt(v) xbar tilt displaces the zero branch a little at
    # finite N; it must stay far below the retrieval overlap ~0.6
    mix = generate_mixture(200, 3, h_max_for_variance(0.15), seed=7)
    xi = mix.xi_components()
    mu = solve_finite_c(xi, 0.5, 0.15, init=np.full(3, 0.01))
    assert np.abs(mu).max() < 0.1
    mu9 = solve_finite_c(xi, 0.9, 0.15, init=np.full(3, 0.01))
    assert np.abs(mu9).max() < 0.25


def test_finite_c_retrieval_frozen():
    mix = generate_mixture(200, 3, h_max_for_variance(0.15), seed=7)
    xi = mix.xi_components()
    mu = solve_finite_c(xi, 2.0, 0.15)
    want = np.array([0.316828, -0.636170, 0.319342])
    assert np.abs(mu - want).max() < 1e-5
    assert finite_c_residual(xi, 2.0, 0.15, mu) < 1e-10
    # one clearly dominant component
    mags = np.sort(np.abs(mu))[::-1]
    assert mags[0] > 1.7 * mags[1]
    again = solve_finite_c(xi, 2.0, 0.15)
    assert np.array_equal(mu, again)


def test_phase_boundaries_match_linearization():
    eta = np.array([0.01, 0.04, 0.1])
    diagram = phase_boundaries(eta)
    assert np.abs(diagram.t_g - (1.0 + np.sqrt(eta))).max() < 1e-3
    assert np.all(diagram.t_m < diagram.t_g)
    assert np.all(np.diff(diagram.t_m) < 0)
    assert abs(diagram.t_m[1] - 0.59365234375) < 1e-6

    buf = io.StringIO()
    write_phase_csv(diagram, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "eta,Tg,TM"
    buf2 = io.StringIO()
    write_phase_csv(phase_boundaries(eta), buf2)
    assert buf2.getvalue() == text


def test_dkl_rho1_closed_form():
    v = 0.15
    assert abs(dkl_rho1(0.0, v) - 0.5 * np.log(1.0 / (1.0 - 4.0 * v))) < 1e-14
    beta_star = np.arctanh(2.0 * np.sqrt(v)) / np.sqrt(v)
    assert dkl_rho1(beta_star, v) < 1e-12
    # independent two-point check at beta = 6
    got = dkl_rho1(6.0, v)
    want = two_point_kl(np.tanh(6.0 * np.sqrt(v)), 2.0 * np.sqrt(v))
    assert abs(got - want) < 1e-12
    assert abs(2.0 * np.sqrt(w_of_beta(6.0, v)) - np.tanh(6.0 * np.sqrt(v))) < 1e-15
    with pytest.raises(ValueError):
        dkl_rho1(1.0, 0.3)


def test_mf_decimation_reduces_to_rho1():
    for beta in (0.9, 1.25, 2.0):
        got = mf_decimation_dkl(MFParams(beta, 0.04, v=0.15, rho=1.0))
        assert abs(got - dkl_rho1(beta, 0.15)) < 1e-8
    beta_star = np.arctanh(2.0 * np.sqrt(0.15)) / np.sqrt(0.15)
    assert mf_decimation_dkl(MFParams(beta_star, 0.04, v=0.15, rho=1.0)) < 1e-12


def test_mf_decimation_zero_noise_two_point():
    v = 0.15
    rho = 0.4
    mu = 0.5
    beta = 1.3
    params = MFParams(beta, 0.04, v=v, rho=rho)
    state = MFState(np.array([mu]), 0.3, 0.0)
    got = mf_decimation_dkl(params, state, field_scale=1.0)
    loc = (1.0 - rho) * mu + rho * np.sqrt(v)
    want = two_point_kl(np.tanh(beta * loc), 2.0 * np.sqrt(v))
    assert abs(got - want) < 1e-12


def test_mf_dkl_curve_and_csv():
    rho = np.array([0.3, 0.6, 1.0])
    curve = mf_dkl_curve(1.25, 0.04, 0.15, rho)
    assert np.all(np.isfinite(curve)) and np.all(curve >= 0)
    assert abs(curve[-1] - dkl_rho1(1.25, 0.15)) < 1e-8

    buf = io.StringIO()
    write_mf_dkl_csv(rho, curve, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "rho,dkl_mf"
    buf2 = io.StringIO()
    write_mf_dkl_csv(rho, mf_dkl_curve(1.25, 0.04, 0.15, rho), buf2)
    assert buf2.getvalue() == text


def test_tune_alpha_of_rho():
    v = 0.15
    pin = 2.0 * np.sqrt(v)
    res = tune_alpha_of_rho(v, 0.04, 1.0)
    assert res.feasible
    assert abs(res.beta - np.arctanh(pin) / pin) < 1e-9
    assert abs(np.tanh(res.beta * pin) - pin) < 1e-10
    assert res.residual < 1e-8

    res5 = tune_alpha_of_rho(v, 0.04, 0.5)
    assert res5.feasible
    assert abs(res5.beta - 1.3742402728685374) < 1e-8
    assert abs(res5.alpha - res5.beta * 0.04 / (4.0 * v)) < 1e-12
    assert res5.residual < 1e-8

    # vanishing load removes the noise term at any rho
    res0 = tune_alpha_of_rho(v, 1e-10, 0.3)
    assert abs(res0.beta - np.arctanh(pin) / pin) < 1e-5

    bad = tune_alpha_of_rho(v, 0.04, 0.5, beta_bracket=(1e-6, 2e-6))
    assert not bad.feasible
