"""Numba kernels for the field-form message passing sweeps.

Messages on binary variables are stored as fields u = 0.5 * log(m(1) / m(0)),
two directed values per edge: index 2k sends into edges[k, 0], index 2k + 1
into edges[k, 1].  Each pair potential is reduced to three constants
(coupling jt, local pieces ca on the lower endpoint and cb on the upper one),
so a sweep costs a handful of tanh/atanh calls per directed edge.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# tanh values are clamped to keep atanh finite; fields stay below ~18
TANH_CAP = 1.0 - 1e-15


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(
        0xFFFFFFFFFFFFFFFF
    )
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(
        0xFFFFFFFFFFFFFFFF
    )
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _shuffle(order, state):
    """Fisher-Yates shuffle driven by splitmix64; returns advanced state."""
    n = order.shape[0]
    for k in range(n - 1, 0, -1):
        state, z = _splitmix64(state)
        r = int(z % np.uint64(k + 1))
        tmp = order[k]
        order[k] = order[r]
        order[r] = tmp
    return state


@njit(cache=True, nogil=True, inline="always")
def _clamp_tanh(t):
    if t > TANH_CAP:
        return TANH_CAP
    if t < -TANH_CAP:
        return -TANH_CAP
    return t


@njit(cache=True, nogil=True)
def sweep(
    var_of,
    opp_var_of,
    tj,
    loc_t,
    loc_o,
    field,
    obs,
    u,
    scratch,
    damping,
    synchronous,
    order,
    rng_state,
):
    """Run one full sweep in place; returns (max |du|, new rng state).

    var_of[d] is the target variable of directed edge d, opp_var_of[d] the
    source.  tj[d] = tanh of the coupling, loc_t[d] / loc_o[d] the local
    potential constants on the target / source side.  field[v] already
    contains any guide contribution for this sweep.  obs[v] < 0 means
    hidden, otherwise the observed state.  scratch[v] accumulates
    field[v] + sum of incoming u, refreshed here from scratch.
    """
    n_dir = u.shape[0]
    n_var = field.shape[0]
    for v in range(n_var):
        scratch[v] = field[v]
    for d in range(n_dir):
        scratch[var_of[d]] += u[d]

    if synchronous:
        max_du = 0.0
        new_u = np.empty(n_dir)
        for d in range(n_dir):
            src = opp_var_of[d]
            if obs[src] >= 0:
                s = 2.0 * obs[src] - 1.0
                raw = loc_t[d] + np.arctanh(tj[d]) * s
            else:
                cav = scratch[src] - u[d ^ 1]
                raw = loc_t[d] + np.arctanh(_clamp_tanh(tj[d] * np.tanh(loc_o[d] + cav)))
            if damping > 0.0:
                mixed = (1.0 - damping) * np.tanh(raw) + damping * np.tanh(u[d])
                raw = np.arctanh(_clamp_tanh(mixed))
            du = raw - u[d]
            if du < 0.0:
                du = -du
            if du > max_du:
                max_du = du
            new_u[d] = raw
        for d in range(n_dir):
            u[d] = new_u[d]
        return max_du, rng_state

    rng_state = _shuffle(order, rng_state)
    max_du = 0.0
    for k in range(n_dir):
        d = order[k]
        src = opp_var_of[d]
        if obs[src] >= 0:
            s = 2.0 * obs[src] - 1.0
            raw = loc_t[d] + np.arctanh(tj[d]) * s
        else:
            cav = scratch[src] - u[d ^ 1]
            raw = loc_t[d] + np.arctanh(_clamp_tanh(tj[d] * np.tanh(loc_o[d] + cav)))
        if damping > 0.0:
            mixed = (1.0 - damping) * np.tanh(raw) + damping * np.tanh(u[d])
            raw = np.arctanh(_clamp_tanh(mixed))
        du = raw - u[d]
        scratch[var_of[d]] += raw - u[d]
        u[d] = raw
        if du < 0.0:
            du = -du
        if du > max_du:
            max_du = du
    return max_du, rng_state


@njit(cache=True, nogil=True)
def run(
    var_of,
    opp_var_of,
    tj,
    loc_t,
    loc_o,
    base_field,
    obs,
    pattern,
    guide_h0,
    guide_decay,
    guide_floor,
    u,
    damping,
    synchronous,
    tol,
    max_iters,
    rng_state,
):
    """Sweep until converged; returns (converged, n_sweeps, last change).

    Convergence requires the sup change of the fields to drop below tol in
    a sweep whose guide amplitude is already below guide_floor.  pattern
    holds guide signs in {-1, +1} (ignored when guide_h0 == 0).
    """
    n_dir = u.shape[0]
    n_var = base_field.shape[0]
    field = np.empty(n_var)
    scratch = np.empty(n_var)
    order = np.empty(n_dir, dtype=np.int64)
    for d in range(n_dir):
        order[d] = d
    h = guide_h0
    change = np.inf
    for t in range(max_iters):
        if h < guide_floor:
            h = 0.0
        if h > 0.0:
            for v in range(n_var):
                field[v] = base_field[v] + h * pattern[v]
        else:
            for v in range(n_var):
                field[v] = base_field[v]
        change, rng_state = sweep(
            var_of,
            opp_var_of,
            tj,
            loc_t,
            loc_o,
            field,
            obs,
            u,
            scratch,
            damping,
            synchronous,
            order,
            rng_state,
        )
        if h == 0.0 and change < tol:
            return True, t + 1, change
        h *= guide_decay
    return False, max_iters, change


@njit(cache=True, nogil=True)
def gbp_sweep(
    var_of,
    opp_var_of,
    tj,
    loc_t,
    loc_o,
    field,
    hfac,
    denom,
    u,
    scratch,
    damping,
    synchronous,
    order,
    rng_state,
):
    """One sweep of the counting-number generalization, same layout as sweep.

    Here tj[d] = tanh(e_a * J / h_a) and loc_t / loc_o carry the e_a / h_a
    rescaled local constants.  scratch[v] accumulates
    e_v * f_v + sum_d hfac[d] * u[d]; the cavity argument divides it by
    denom[v] = h_v + sum of incident h_a.  With standard counting numbers
    hfac = denom = 1 and the arithmetic reduces to sweep() exactly.
    """
    n_dir = u.shape[0]
    n_var = field.shape[0]
    for v in range(n_var):
        scratch[v] = field[v]
    for d in range(n_dir):
        scratch[var_of[d]] += hfac[d] * u[d]

    if synchronous:
        max_du = 0.0
        new_u = np.empty(n_dir)
        for d in range(n_dir):
            src = opp_var_of[d]
            cav = scratch[src] / denom[src] - u[d ^ 1]
            raw = loc_t[d] + np.arctanh(_clamp_tanh(tj[d] * np.tanh(loc_o[d] + cav)))
            if damping > 0.0:
                mixed = (1.0 - damping) * np.tanh(raw) + damping * np.tanh(u[d])
                raw = np.arctanh(_clamp_tanh(mixed))
            du = raw - u[d]
            if du < 0.0:
                du = -du
            if du > max_du:
                max_du = du
            new_u[d] = raw
        for d in range(n_dir):
            u[d] = new_u[d]
        return max_du, rng_state

    rng_state = _shuffle(order, rng_state)
    max_du = 0.0
    for k in range(n_dir):
        d = order[k]
        src = opp_var_of[d]
        cav = scratch[src] / denom[src] - u[d ^ 1]
        raw = loc_t[d] + np.arctanh(_clamp_tanh(tj[d] * np.tanh(loc_o[d] + cav)))
        if damping > 0.0:
            mixed = (1.0 - damping) * np.tanh(raw) + damping * np.tanh(u[d])
            raw = np.arctanh(_clamp_tanh(mixed))
        du = raw - u[d]
        scratch[var_of[d]] += hfac[d] * (raw - u[d])
        u[d] = raw
        if du < 0.0:
            du = -du
        if du > max_du:
            max_du = du
    return max_du, rng_state


@njit(cache=True, nogil=True)
def gbp_run(
    var_of,
    opp_var_of,
    tj,
    loc_t,
    loc_o,
    base_field,
    hfac,
    denom,
    u,
    damping,
    synchronous,
    tol,
    max_iters,
    rng_state,
):
    n_dir = u.shape[0]
    n_var = base_field.shape[0]
    scratch = np.empty(n_var)
    order = np.empty(n_dir, dtype=np.int64)
    for d in range(n_dir):
        order[d] = d
    change = np.inf
    for t in range(max_iters):
        change, rng_state = gbp_sweep(
            var_of,
            opp_var_of,
            tj,
            loc_t,
            loc_o,
            base_field,
            hfac,
            denom,
            u,
            scratch,
            damping,
            synchronous,
            order,
            rng_state,
        )
        if change < tol:
            return True, t + 1, change
    return False, max_iters, change
