"""Self-consistent mean-field systems for the mixture-encoded spin model.

Two regimes: a finite-C saddle point over component overlaps, and the
extensive-C system in the standardized-pattern variables (overlap vector
mu, Edwards-Anderson q, noise r).  Decimation enters through the
substitutions beta -> (1-rho) beta, eta -> eta / (1-rho) plus a frozen
field from the observed sites, and the per-site KL distance to the
reference marginals has a closed form at rho = 1.

All expectations are deterministic quadratures: Gauss-Hermite for the
Gaussian noise z, an exact sum over {-1,+1}^s patterns for the binary law,
Gauss-Legendre over the field interval for the tanh-uniform law.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mixture import field_variance, h_max_for_variance

__all__ = [
    "MFParams",
    "MFState",
    "PhaseDiagram",
    "TuneResult",
    "CANONICAL_INITS",
    "solve_ags",
    "solve_branches",
    "ags_residual",
    "decimated_params",
    "solve_finite_c",
    "finite_c_residual",
    "phase_boundaries",
    "dkl_rho1",
    "w_of_beta",
    "mf_decimation_dkl",
    "mf_dkl_curve",
    "tune_alpha_of_rho",
    "write_phase_csv",
    "write_mf_dkl_csv",
]

DEFAULT_QUAD_ORDER = 40

CANONICAL_INITS = {
    "paramagnetic": (0.0, 0.0),
    "spin-glass": (0.0, 0.5),
    "mattis": (0.9, 0.9),
}


@dataclass(frozen=True)
class MFParams:
    """Extensive-C system parameters.

    h is an optional external field paired with the first s pattern
    entries; rho and field_scale only matter to the decimation helpers,
    which fold them into substituted (beta, eta, h).
    """

    beta: float
    eta: float
    v: float = 0.0
    rho: float = 0.0
    s: int = 1
    h: np.ndarray | None = None
    xi_law: str = "binary"
    h_max: float | None = None
    quad_order: int = 40
    field_scale: float = 2.0

    def __post_init__(self):
        if self.beta < 0 or self.eta < 0:
            raise ValueError("beta and eta must be nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        if self.s < 1:
            raise ValueError("need at least one condensed component")
        if self.quad_order < 20:
            raise ValueError("quadrature order must be at least 20")
        law = self.xi_law.replace("-", "_")
        if law not in ("binary", "tanh_uniform"):
            raise ValueError(f"unknown xi law {self.xi_law!r}")
        object.__setattr__(self, "xi_law", law)
        if self.h is not None:
            h = np.ascontiguousarray(self.h, dtype=float)
            if h.shape != (self.s,):
                raise ValueError("external field must have one entry per condensed component")
            h.setflags(write=False)
            object.__setattr__(self, "h", h)

    def field(self):
        return np.zeros(self.s) if self.h is None else self.h


@dataclass(frozen=True)
class MFState:
    """Converged order parameters; w only applies to the rho = 1 overlap."""

    mu: np.ndarray
    q: float
    r: float
    converged: bool = True
    residual: float = 0.0
    w: float | None = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)


def _z_nodes(order):
    x, w = np.polynomial.hermite.hermgauss(order)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def _xi_nodes(params, gl_order=20):
    """Pattern states and weights: (M, s) values and (M,) probabilities."""
    if params.xi_law == "binary":
        s = params.s
        grids = np.meshgrid(*([np.array([-1.0, 1.0])] * s), indexing="ij")
        states = np.stack([g.ravel() for g in grids], axis=1)
        return states, np.full(len(states), 0.5**s)
    if params.s != 1:
        raise ValueError("tanh-uniform law is only defined for s = 1")
    v = params.v if params.v > 0 else (
        field_variance(params.h_max) if params.h_max else 0.0
    )
    if v <= 0:
        raise ValueError("tanh-uniform law needs v > 0 or h_max")
    h_max = params.h_max if params.h_max else h_max_for_variance(v)
    x, w = np.polynomial.legendre.leggauss(gl_order)
    xi = np.tanh(h_max * x) / (2.0 * np.sqrt(v))
    return xi[:, None], w / 2.0


def _noise_r(beta, q):
    den = 1.0 - beta * (1.0 - q)
    if abs(den) < 1e-12:
        den = np.copysign(1e-12, den if den != 0 else 1.0)
    return q / den**2


def _ags_rhs(params, mu, q, xi, w_xi, z, w_z):
    """One application of the self-consistency map; returns (mu', q', r)."""
    r = _noise_r(params.beta, q)
    loc = xi @ (mu + params.field())
    noise = np.sqrt(max(params.eta * r, 0.0)) * z
    t = np.tanh(params.beta * (loc[:, None] + noise[None, :]))
    tz = t @ w_z
    mu_new = (w_xi * tz) @ xi
    q_new = float(w_xi @ ((t * t) @ w_z))
    return mu_new, q_new, r


def _coerce_init(init, s):
    if init is None:
        init = CANONICAL_INITS["mattis"]
    if isinstance(init, MFState):
        mu = np.array(init.mu, dtype=float)
        if mu.shape != (s,):
            raise ValueError("init mu has wrong length")
        return mu, float(init.q)
    m0, q0 = init
    mu = np.zeros(s)
    mu[0] = float(m0)
    return mu, float(q0)


def solve_ags(params, init=None, damping=0.5, tol=1e-10, max_iters=100000):
    """Damped fixed-point iteration of the extensive-C system.

    init is an MFState or an (mu_first, q) pair; which branch is reached
    depends on it (see CANONICAL_INITS).  Raises RuntimeError when the
    update change grows for 50 consecutive steps.
    """
    xi, w_xi = _xi_nodes(params)
    z, w_z = _z_nodes(params.quad_order)
    mu, q = _coerce_init(init, params.s)
    last = np.inf
    n_grow = 0
    for _ in range(max_iters):
        mu_new, q_new, r = _ags_rhs(params, mu, q, xi, w_xi, z, w_z)
        change = max(float(np.max(np.abs(mu_new - mu))), abs(q_new - q))
        mu = (1.0 - damping) * mu_new + damping * mu
        q = (1.0 - damping) * q_new + damping * q
        if change < tol:
            r = _noise_r(params.beta, q)
            return MFState(mu, q, r, True, change)
        # growth alone is normal while an instability amplifies; only a
        # genuinely exploding or non-finite residual is fatal
        if not np.isfinite(change):
            raise RuntimeError("mean-field iteration diverges")
        n_grow = n_grow + 1 if change > last else 0
        if n_grow >= 50 and change > 1e3:
            raise RuntimeError("mean-field iteration diverges")
        last = change
    r = _noise_r(params.beta, q)
    return MFState(mu, q, r, False, last)


def ags_residual(params, state):
    """Sup-norm violation of the three self-consistency equations."""
    xi, w_xi = _xi_nodes(params)
    z, w_z = _z_nodes(params.quad_order)
    mu_new, q_new, _ = _ags_rhs(params, state.mu, state.q, xi, w_xi, z, w_z)
    r_new = _noise_r(params.beta, state.q)
    return max(
        float(np.max(np.abs(mu_new - state.mu))),
        abs(q_new - state.q),
        abs(r_new - state.r),
    )


def solve_branches(params, tol=1e-10):
    """Solve from the three canonical inits; distinct converged states."""
    out = {}
    for name, init in CANONICAL_INITS.items():
        try:
            state = solve_ags(params, init, tol=tol)
        except RuntimeError:
            continue
        if not state.converged:
            continue
        dup = any(
            np.max(np.abs(state.mu - s2.mu)) < 1e-6 and abs(state.q - s2.q) < 1e-6
            for s2 in out.values()
        )
        if not dup:
            out[name] = state
    return out


def decimated_params(params, rho=None):
    """Fold the observed fraction into substituted (beta, eta, h).

    beta -> (1-rho) beta, eta -> eta/(1-rho); the frozen field from the
    revealed sites becomes h = field_scale * rho * sqrt(v) / (1-rho) on the
    first component, so that beta_sub * h reproduces the physical
    beta * field_scale * rho * sqrt(v).
    """
    rho = params.rho if rho is None else rho
    if not 0.0 <= rho < 1.0:
        raise ValueError("substitution requires rho in [0, 1)")
    if rho == 0.0:
        return replace(params, rho=0.0)
    if params.v <= 0:
        raise ValueError("decimation field needs v > 0")
    h = params.field().copy()
    h[0] += params.field_scale * rho * np.sqrt(params.v) / (1.0 - rho)
    return replace(
        params,
        beta=(1.0 - rho) * params.beta,
        eta=params.eta / (1.0 - rho),
        h=h,
        rho=rho,
    )


def _finite_c_arg(xi, beta, v, mu):
    xbar = xi.mean(axis=0)
    d = xi - xbar
    return d, beta * (d.T @ mu) - 2.0 * np.sqrt(v) * xbar


def solve_finite_c(xi, beta, v, init=None, damping=0.5, tol=1e-12, max_iters=100000):
    """Saddle point over the C component overlaps at finite C.

    xi is the (C, N) table of standardized patterns.  Iterates
    mu_c = (1/N) sum_i (xi_i^c - xbar_i) tanh(beta sum_c' (xi_i^c' -
    xbar_i) mu_c' - 2 sqrt(v) xbar_i) from a component-aligned start.
    """
    xi = np.asarray(xi, dtype=float)
    n_c, n = xi.shape
    if init is None:
        mu = np.zeros(n_c)
        mu[0] = 0.9
    else:
        mu = np.array(init, dtype=float)
    last = np.inf
    n_grow = 0
    for _ in range(max_iters):
        d, arg = _finite_c_arg(xi, beta, v, mu)
        mu_new = d @ np.tanh(arg) / n
        change = float(np.max(np.abs(mu_new - mu)))
        mu = (1.0 - damping) * mu_new + damping * mu
        if change < tol:
            return mu
        if not np.isfinite(change):
            raise RuntimeError("finite-C iteration diverges")
        n_grow = n_grow + 1 if change > last else 0
        if n_grow >= 50 and change > 1e3:
            raise RuntimeError("finite-C iteration diverges")
        last = change
    return mu


def finite_c_residual(xi, beta, v, mu):
    xi = np.asarray(xi, dtype=float)
    d, arg = _finite_c_arg(xi, beta, v, mu)
    return float(np.max(np.abs(d @ np.tanh(arg) / xi.shape[1] - mu)))


@dataclass(frozen=True)
class PhaseDiagram:
    eta: np.ndarray
    t_g: np.ndarray
    t_m: np.ndarray


def _sg_onset(eta, temp, quad_order):
    """Does a q > 0 solution survive at this temperature?"""
    params = MFParams(beta=1.0 / temp, eta=eta, quad_order=quad_order)
    state = solve_ags(params, (0.0, 1e-3), tol=1e-14, max_iters=400000)
    return state.q > 1e-8


def _mattis_onset(eta, temp, quad_order, init):
    params = MFParams(beta=1.0 / temp, eta=eta, quad_order=quad_order)
    try:
        state = solve_ags(params, init, tol=1e-12, max_iters=200000)
    except RuntimeError:
        return None
    if state.converged and float(np.max(np.abs(state.mu))) > 1e-3:
        return state
    return None


def phase_boundaries(eta_grid, quad_order=40, tol=2e-4, t_max=3.0):
    """Spin-glass onset T_g and Mattis spinodal T_M per load value.

    T_g bisects the survival of a q > 0 solution seeded just off the
    paramagnetic point; the seed only grows inside the instability window
    around T = 1 (its linearization gives T_g = 1 + sqrt(eta)), so the
    lower bracket end is pinned at T = 1, which the window always
    contains.  T_M bisects the highest temperature where an aligned init
    still converges onto a mu > 0 branch; the lower anchor comes from a
    descending coarse scan and each probe continues from the last
    surviving state.
    """
    eta_grid = np.atleast_1d(np.asarray(eta_grid, dtype=float))
    t_g = np.empty_like(eta_grid)
    t_m = np.empty_like(eta_grid)
    for idx, eta in enumerate(eta_grid):
        lo, hi = 1.0, t_max
        if _sg_onset(eta, hi, quad_order) or not _sg_onset(eta, lo, quad_order):
            raise ValueError(f"T_g bracket failed at eta={eta}")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _sg_onset(eta, mid, quad_order):
                lo = mid
            else:
                hi = mid
        t_g[idx] = 0.5 * (lo + hi)

        lo = None
        hi = min(1.5, t_max)
        probe_t = hi
        carry = None
        while probe_t >= 0.05:
            found = _mattis_onset(eta, probe_t, quad_order, CANONICAL_INITS["mattis"])
            if found is not None:
                lo, carry = probe_t, found
                break
            hi = probe_t
            probe_t -= 0.1
        if lo is None:
            raise ValueError(f"no Mattis branch found at eta={eta}")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            probe = _mattis_onset(eta, mid, quad_order, carry)
            if probe is not None:
                lo, carry = mid, probe
            else:
                hi = mid
        t_m[idx] = 0.5 * (lo + hi)
    return PhaseDiagram(eta_grid, t_g, t_m)


def w_of_beta(beta, v):
    """Squared half-overlap w with 2 sqrt(w) = tanh(beta sqrt(v))."""
    return 0.25 * np.tanh(beta * np.sqrt(v)) ** 2


def dkl_rho1(beta, v):
    """Closed-form per-site KL between the thermal and reference marginals.

    With 2 sqrt(w) = tanh(beta sqrt(v)): D = (1/2 + sqrt(w)) log((1 + 2
    sqrt(w))/(1 + 2 sqrt(v))) + (1/2 - sqrt(w)) log((1 - 2 sqrt(w))/(1 - 2
    sqrt(v))).  Vanishes exactly when tanh(beta sqrt(v)) = 2 sqrt(v).
    """
    if not 0.0 <= 4.0 * v < 1.0:
        raise ValueError("requires 4 v < 1")
    sw = 0.5 * np.tanh(beta * np.sqrt(v))
    sv = np.sqrt(v)
    return float(
        (0.5 + sw) * np.log((1.0 + 2.0 * sw) / (1.0 + 2.0 * sv))
        + (0.5 - sw) * np.log((1.0 - 2.0 * sw) / (1.0 - 2.0 * sv))
    )


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def _reference_field(xi, v, reference):
    if reference == "sqrt":
        return np.arctanh(np.clip(2.0 * np.sqrt(v) * xi, -1 + 1e-15, 1 - 1e-15))
    if reference == "literal":
        return np.arctanh(np.clip(2.0 * v * xi, -1 + 1e-15, 1 - 1e-15))
    raise ValueError(f"unknown reference convention {reference!r}")


def mf_decimation_dkl(params, state=None, field_scale=1.0, reference="sqrt"):
    """Mean KL distance of the decimated thermal belief to the reference.

    The belief field is beta * h with h = xi ((1-rho) mu + field_scale *
    rho * sqrt(v)) + sqrt((1-rho) r eta) z, where (mu, q, r) solve the
    substituted system; the reference field is atanh(2 sqrt(v) xi) (the
    convention under which rho = 1 collapses to dkl_rho1), or the literal
    atanh(2 v xi) variant.  state may be omitted at rho = 1, where the
    solved branch no longer enters.
    """
    rho = params.rho
    v = params.v
    if v <= 0:
        raise ValueError("needs v > 0")
    xi, w_xi = _xi_nodes(params)
    x1 = xi[:, 0]
    bh_ref = _reference_field(x1, v, reference)
    if rho >= 1.0:
        bh = params.beta * field_scale * np.sqrt(v) * x1
        vals = (bh - bh_ref) * np.tanh(bh) + _logcosh(bh_ref) - _logcosh(bh)
        return float(w_xi @ vals)
    if state is None:
        state = solve_ags(decimated_params(params, rho))
    z, w_z = _z_nodes(params.quad_order)
    mu1 = float(state.mu[0])
    loc = x1 * ((1.0 - rho) * mu1 + field_scale * rho * np.sqrt(v))
    noise = np.sqrt(max((1.0 - rho) * state.r * params.eta, 0.0)) * z
    bh = params.beta * (loc[:, None] + noise[None, :])
    inner = (bh - bh_ref[:, None]) * np.tanh(bh) + _logcosh(bh_ref)[:, None] - _logcosh(bh)
    return float(w_xi @ (inner @ w_z))


def mf_dkl_curve(
    beta,
    eta,
    v,
    rho_grid,
    xi_law="binary",
    field_scale=1.0,
    reference="sqrt",
    quad_order=40,
    h_max=None,
):
    """Decimation KL curve with branch continuation along the rho grid."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    base = MFParams(
        beta=beta, eta=eta, v=v, xi_law=xi_law, quad_order=quad_order,
        h_max=h_max, field_scale=field_scale,
    )
    out = np.empty(len(rho_grid))
    carry = CANONICAL_INITS["mattis"]
    for g, rho in enumerate(rho_grid):
        params = replace(base, rho=float(rho))
        if rho >= 1.0:
            out[g] = mf_decimation_dkl(params, None, field_scale, reference)
            continue
        state = solve_ags(decimated_params(params), carry)
        carry = state
        out[g] = mf_decimation_dkl(params, state, field_scale, reference)
    return out


@dataclass(frozen=True)
class TuneResult:
    beta: float
    alpha: float
    residual: float
    feasible: bool


def _tuned_overlap(beta, eta, v, rho, z, w_z, damping=0.5, tol=1e-12, max_iters=100000):
    """Inner (q, r) solve with the overlap pinned at 2 sqrt(v)."""
    pin = 2.0 * np.sqrt(v)
    q = 0.5
    for _ in range(max_iters):
        den = 1.0 - beta * (1.0 - rho) * (1.0 - q)
        if abs(den) < 1e-12:
            den = 1e-12
        r = q / den**2
        arg = beta * (np.sqrt(max((1.0 - rho) * eta * r, 0.0)) * z + pin)
        q_new = float(w_z @ np.tanh(arg) ** 2)
        if abs(q_new - q) < tol:
            q = q_new
            break
        q = (1.0 - damping) * q_new + damping * q
    den = 1.0 - beta * (1.0 - rho) * (1.0 - q)
    if abs(den) < 1e-12:
        den = 1e-12
    r = q / den**2
    arg = beta * (np.sqrt(max((1.0 - rho) * eta * r, 0.0)) * z + pin)
    return float(w_z @ np.tanh(arg)) - pin, q, r


def tune_alpha_of_rho(v, eta, rho, quad_order=40, beta_bracket=(1e-6, 60.0), tol=1e-12):
    """Solve for the beta whose tuned system keeps the overlap at 2 sqrt(v).

    The system fixes mu = 2 sqrt(v) and requires E_z tanh(beta(sqrt((1 -
    rho) eta r) z + 2 sqrt(v))) = 2 sqrt(v) with (q, r) self-consistent.
    Returns the matching beta and alpha = beta eta / (4 v), or feasible =
    False when the bracket holds no root.
    """
    if not 0.0 < 4.0 * v < 1.0:
        raise ValueError("requires 0 < 4 v < 1")
    z, w_z = _z_nodes(quad_order)
    lo, hi = beta_bracket
    f_lo, _, _ = _tuned_overlap(lo, eta, v, rho, z, w_z)
    f_hi, _, _ = _tuned_overlap(hi, eta, v, rho, z, w_z)
    if f_lo * f_hi > 0:
        worst = min(abs(f_lo), abs(f_hi))
        beta = lo if abs(f_lo) < abs(f_hi) else hi
        return TuneResult(beta, beta * eta / (4.0 * v), worst, False)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid, _, _ = _tuned_overlap(mid, eta, v, rho, z, w_z)
        if f_lo * f_mid <= 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo < tol * max(1.0, hi):
            break
    beta = 0.5 * (lo + hi)
    res, _, _ = _tuned_overlap(beta, eta, v, rho, z, w_z)
    return TuneResult(beta, beta * eta / (4.0 * v), abs(res), True)


def write_phase_csv(diagram, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("eta,Tg,TM\n")
        for e, tg, tm in zip(diagram.eta, diagram.t_g, diagram.t_m):
            f.write(f"{e:.17g},{tg:.17g},{tm:.17g}\n")
    finally:
        if own:
            f.close()


def write_mf_dkl_csv(rho_grid, dkl, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes))
    f = open(path_or_buf, "w") if own else path_or_buf
    try:
        f.write("rho,dkl_mf\n")
        for r, d in zip(rho_grid, dkl):
            f.write(f"{r:.17g},{d:.17g}\n")
    finally:
        if own:
            f.close()
