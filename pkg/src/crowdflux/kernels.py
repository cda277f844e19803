"""Time-loop kernels for the constrained Godunov scheme.

Two implementations of the same loop live here: a scalar one compiled with
numba and a vectorised pure-numpy one.  ``advance`` is bound to the numba
version unless numba is missing or ``CROWDFLUX_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``; both are always importable so they can be
compared and benchmarked side by side.

Site data is packed into plain arrays (see ``scheme.pack_sites``) so the
compiled kernel sees only numbers.  Efficiency kinds: 0 = piecewise
constant, 1 = piecewise linear.  Modes: 0 = non-local, 1 = prescribed
signal read from ``q_table[n, s]``.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("CROWDFLUX_DISABLE_NUMBA", "")
NUMBA_REQUESTED = _flag in ("", "0")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and NUMBA_REQUESTED

MODE_NONLOCAL = 0
MODE_PRESCRIBED = 1
KIND_CONSTANT = 0
KIND_LINEAR = 1

# |rho| below this is flushed to zero after each update: the geometric tails
# of emptied cells otherwise decay into subnormals, which are ~50x slower.
FLUSH_BELOW = 1e-250


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def godunov_scalar(a, b, m, vmax, rho_max):
    sig = 0.5 * rho_max
    ga = a * (1.0 - a / rho_max)
    gb = b * (1.0 - b / rho_max)
    if a <= b:
        return (m * vmax) * min(ga, gb)
    if b <= sig and sig <= a:
        return (m * vmax) * (sig * (1.0 - sig / rho_max))
    return (m * vmax) * max(ga, gb)


@njit(cache=True)
def efficiency_scalar(kind, levels, bps, nbp, beta, amp, xi):
    if xi < 0.0:
        xi = 0.0
    elif xi > 1.0:
        xi = 1.0
    s = beta * xi
    if kind == KIND_CONSTANT:
        k = 0
        while k < nbp and bps[k] <= s:
            k += 1
        return amp * levels[k]
    if s < bps[0]:
        return amp * levels[0]
    if s >= bps[nbp - 1]:
        return amp * levels[nbp - 1]
    k = 0
    while bps[k + 1] <= s:
        k += 1
    t = (s - bps[k]) / (bps[k + 1] - bps[k])
    return amp * (levels[k] + (levels[k + 1] - levels[k]) * t)


@njit(cache=True)
def _advance_numba(
    rho0, dx, dt, vmax, rho_max, mult,
    iface, jw, wts, kind, levels, bps, nbp, beta, amp,
    mode, q_table, exit_site, nmax, threshold, stop, snap_steps,
):
    n = rho0.shape[0]
    ns = iface.shape[0]
    rho = rho0.copy()
    flux = np.empty(n + 1)
    demand = np.empty(n)
    supply = np.empty(n)
    speed = mult * vmax
    sig = 0.5 * rho_max
    q = np.empty(ns)
    q_hist = np.empty((nmax + 1, ns))
    exit_hist = np.empty(nmax + 1)
    mass_hist = np.empty(nmax + 1)
    rmin = np.empty(nmax)
    rmax = np.empty(nmax)
    cons = np.empty(nmax)
    snaps = np.empty((snap_steps.shape[0], n))
    n_snap = snap_steps.shape[0]
    next_snap = 0
    evac_step = -1
    lam = dt / dx
    jexit = iface[exit_site]
    before = 0.0
    for j in range(n):
        before += rho[j]

    step = 0
    while True:
        for s in range(ns):
            if mode == MODE_NONLOCAL:
                acc = 0.0
                for j in range(jw[s], iface[s]):
                    acc += wts[s, j - jw[s]] * rho[j]
                q[s] = efficiency_scalar(
                    kind[s], levels[s], bps[s], nbp[s], beta[s], amp[s], dx * acc
                )
            else:
                q[s] = q_table[step, s]
            q_hist[step, s] = q[s]
        upstream = 0.0
        for j in range(jexit):
            upstream += rho[j]
        upstream *= dx
        mass_hist[step] = upstream
        exit_hist[step] = rho[jexit - 1]
        while next_snap < n_snap and snap_steps[next_snap] == step:
            snaps[next_snap, :] = rho
            next_snap += 1
        if evac_step < 0 and upstream <= threshold:
            evac_step = step
        if step == nmax or (stop and evac_step >= 0 and next_snap == n_snap):
            break

        # demand/supply form of the concave Godunov flux, equal to the
        # min/max closed form value for value
        for j in range(n):
            lo_ = min(rho[j], sig)
            hi_ = max(rho[j], sig)
            demand[j] = lo_ * (1.0 - lo_ / rho_max)
            supply[j] = hi_ * (1.0 - hi_ / rho_max)
        flux[0] = speed[0] * min(demand[0], supply[0])
        for i in range(1, n):
            flux[i] = speed[i] * min(demand[i - 1], supply[i])
        flux[n] = speed[n] * min(demand[n - 1], supply[n - 1])
        for s in range(ns):
            if flux[iface[s]] > q[s]:
                flux[iface[s]] = q[s]

        after = 0.0
        lo = np.inf
        hi = -np.inf
        for j in range(n):
            r = rho[j] - lam * (flux[j + 1] - flux[j])
            if abs(r) < FLUSH_BELOW:
                r = 0.0
            rho[j] = r
            after += rho[j]
            if rho[j] < lo:
                lo = rho[j]
            if rho[j] > hi:
                hi = rho[j]
        rmin[step] = lo
        rmax[step] = hi
        cons[step] = dx * (after - before) + dt * (flux[n] - flux[0])
        before = after
        step += 1

    nrec = step + 1
    return (
        nrec, q_hist[:nrec], exit_hist[:nrec], mass_hist[:nrec],
        rmin[:step], rmax[:step], cons[:step], snaps, evac_step, rho,
    )


# ---------------------------------------------------------------- numpy path


def godunov_vec(a, b, m, vmax, rho_max):
    """Godunov flux at every interface from its left/right states ``a``, ``b``.

    ``f(x, rho) = m(x) v_max g(rho)`` with ``m v_max >= 0``, so min/max are
    taken on ``g`` and scaled once; the numba loop uses the same factoring.
    """
    sig = 0.5 * rho_max
    ga = a * (1.0 - a / rho_max)
    gb = b * (1.0 - b / rho_max)
    g_sig = sig * (1.0 - sig / rho_max)
    gmax = np.where((b <= sig) & (sig <= a), g_sig, np.maximum(ga, gb))
    return (m * vmax) * np.where(a <= b, np.minimum(ga, gb), gmax)


def boundary_extended(rho):
    """Left/right states at every interface with copy-out ghost cells."""
    left = np.empty(rho.shape[0] + 1)
    right = np.empty(rho.shape[0] + 1)
    left[0] = rho[0]
    left[1:] = rho
    right[:-1] = rho
    right[-1] = rho[-1]
    return left, right


def flush_tiny(rho):
    rho[np.abs(rho) < FLUSH_BELOW] = 0.0
    return rho


def _efficiency_np(kind, levels, bps, nbp, beta, amp, xi):
    s = beta * min(max(xi, 0.0), 1.0)
    b = bps[:nbp]
    if kind == KIND_CONSTANT:
        return amp * levels[int(np.searchsorted(b, s, side="right"))]
    return amp * float(np.interp(s, b, levels[:nbp]))


def _advance_numpy(
    rho0, dx, dt, vmax, rho_max, mult,
    iface, jw, wts, kind, levels, bps, nbp, beta, amp,
    mode, q_table, exit_site, nmax, threshold, stop, snap_steps,
):
    n = rho0.shape[0]
    ns = iface.shape[0]
    rho = rho0.copy()
    q = np.empty(ns)
    q_hist = np.empty((nmax + 1, ns))
    exit_hist = np.empty(nmax + 1)
    mass_hist = np.empty(nmax + 1)
    rmin = np.empty(nmax)
    rmax = np.empty(nmax)
    cons = np.empty(nmax)
    snaps = np.empty((snap_steps.shape[0], n))
    n_snap = snap_steps.shape[0]
    next_snap = 0
    evac_step = -1
    lam = dt / dx
    jexit = int(iface[exit_site])
    windows = [(int(jw[s]), int(iface[s]), wts[s, : int(iface[s]) - int(jw[s])]) for s in range(ns)]
    before = rho.sum()

    step = 0
    while True:
        for s in range(ns):
            if mode == MODE_NONLOCAL:
                a, b, w = windows[s]
                xi = dx * float(np.dot(w, rho[a:b]))
                q[s] = _efficiency_np(kind[s], levels[s], bps[s], nbp[s], beta[s], amp[s], xi)
            else:
                q[s] = q_table[step, s]
        q_hist[step] = q
        upstream = dx * float(rho[:jexit].sum())
        mass_hist[step] = upstream
        exit_hist[step] = rho[jexit - 1]
        while next_snap < n_snap and snap_steps[next_snap] == step:
            snaps[next_snap] = rho
            next_snap += 1
        if evac_step < 0 and upstream <= threshold:
            evac_step = step
        if step == nmax or (stop and evac_step >= 0 and next_snap == n_snap):
            break

        left, right = boundary_extended(rho)
        flux = godunov_vec(left, right, mult, vmax, rho_max)
        np.minimum.at(flux, iface, q)
        rho = flush_tiny(rho - lam * np.diff(flux))
        after = rho.sum()
        rmin[step] = rho.min()
        rmax[step] = rho.max()
        cons[step] = dx * (after - before) + dt * (flux[-1] - flux[0])
        before = after
        step += 1

    nrec = step + 1
    return (
        nrec, q_hist[:nrec], exit_hist[:nrec], mass_hist[:nrec],
        rmin[:step], rmax[:step], cons[:step], snaps, evac_step, rho,
    )


advance = _advance_numba if USE_NUMBA else _advance_numpy
