"""Pure-numpy integration kernels (fallback when the compiled extension is absent).

Both kernels integrate the cascade

    d rho_M / dt = -Gamma_M rho_M + Gamma_{M+1} rho_{M+1}

with Gamma given per level and rho_{n+1} == 0.  The implicit-trapezoid kernel
keeps an active window [lo, hi] of levels whose occupation exceeds
``window_eps``; levels above the window are frozen at zero with their residual
pushed one level down (mass conserving), levels below are brought in as the
bidiagonal solve transports occupation downward.  Step size is adapted from a
step-doubling error estimate on the two reported functionals E = sum(M rho)
and P = sum(Gamma rho).

The compiled Cython module implements the same algorithm with scalar loops;
the two are cross-checked by the test suite.

Status codes returned in the stats dict: 0 ok, 1 non-finite values
encountered, 2 step-size underflow.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_banded

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_UNDERFLOW = 2

# Controller constants (shared with the compiled kernel).
GROW_MAX = 1.3       # largest per-step growth of h
SHRINK_MIN = 0.1     # hardest per-retry shrink of h
SAFETY = 0.85
EFOLD_FLOOR = 1e-3   # per-step error bound floor, in units of error_tol
FIRST_STEP = 0.1     # initial h = FIRST_STEP / max(Gamma)
TINY = 1e-300


def _functionals(gamma, m_idx, buf, lo, hi):
    xc = np.maximum(buf[lo:hi + 1], 0.0)
    e = float(np.dot(m_idx[lo:hi + 1], xc))
    p = float(np.dot(gamma[lo:hi + 1], xc))
    return e, p


def _step(gamma, src, lo, hi, s, eps_ext, window_eps, dst):
    """One implicit-trapezoid step of size s from src[lo:hi+1] into dst.

    Returns the new (lo, hi).  dst must be zero outside [lo_new, hi_new];
    the caller guarantees dst is zero on entry over its own dirty range.
    """
    half = 0.5 * s

    # Pad the window downward far enough that the transported tail falls
    # below eps_ext; retry with a bigger pad if the guess was short.
    lo_ext = lo
    if lo > 0:
        pad = 64 + int(3.0 * s * gamma[lo])
        lo_ext = max(0, lo - pad)
    while True:
        nw = hi + 1 - lo_ext
        off = lo - lo_ext
        b = np.zeros(nw)
        src_w = src[lo:hi + 1]
        b[off:] = src_w * (1.0 - half * gamma[lo:hi + 1])
        if hi > lo:
            b[off:-1] += half * gamma[lo + 1:hi + 1] * src_w[1:]
        ab = np.empty((2, nw))
        ab[0, 0] = 0.0
        ab[0, 1:] = -half * gamma[lo_ext + 1:hi + 1]
        ab[1, :] = 1.0 + half * gamma[lo_ext:hi + 1]
        x = solve_banded((0, 1), ab, b, overwrite_ab=True, overwrite_b=True)
        if lo_ext == 0 or x[0] <= eps_ext:
            break
        lo_ext = max(0, lo - 2 * (lo - lo_ext))

    # Trim the sub-threshold bottom fringe, folding its mass into the edge.
    j = 0
    nw = x.shape[0]
    while j < nw - 1 and x[j] <= eps_ext:
        j += 1
    if j > 0:
        x[j] += float(x[:j].sum())
    lo_new = lo_ext + j

    # Freeze decayed-out top levels, pushing residual occupation down.
    ihi = hi - lo_ext
    while ihi > j and x[ihi] <= window_eps:
        x[ihi - 1] += x[ihi]
        x[ihi] = 0.0
        ihi -= 1
    hi_new = lo_ext + ihi

    dst[lo_new:hi_new + 1] = x[j:ihi + 1]
    return lo_new, hi_new


def run_trapezoid(gamma, rho0, out_times, error_tol, window_eps, store_states):
    """Adaptive implicit-trapezoid integration of the decay cascade.

    Returns (E, P, states, stats); states is None unless store_states.
    """
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    n_levels = gamma.shape[0]
    n_out = out_times.shape[0]
    m_idx = np.arange(n_levels, dtype=np.float64)
    eps_ext = window_eps * 1e-3

    e_out = np.zeros(n_out)
    p_out = np.zeros(n_out)
    states = np.zeros((n_out, n_levels)) if store_states else None
    stats = {"n_steps": 0, "n_rejected": 0, "status": STATUS_OK, "min_rho": 0.0}

    # Four ping-pong buffers: current state, full-step trial, half-step
    # midpoint, half-step result.  Each is zero outside its recorded window.
    bufs = [np.zeros(n_levels) for _ in range(4)]
    wins = [(0, -1)] * 4

    nz = np.nonzero(rho0)[0]
    lo, hi = (int(nz[0]), int(nz[-1])) if nz.size else (0, 0)
    cur = 0
    bufs[cur][lo:hi + 1] = rho0[lo:hi + 1]
    wins[cur] = (lo, hi)

    def emit(k):
        l, h = wins[cur]
        e_out[k], p_out[k] = _functionals(gamma, m_idx, bufs[cur], l, h)
        if store_states:
            states[k, l:h + 1] = np.maximum(bufs[cur][l:h + 1], 0.0)

    def clear(i):
        l, h = wins[i]
        if h >= l:
            bufs[i][l:h + 1] = 0.0
        wins[i] = (0, -1)

    t = 0.0
    k0 = 0
    while k0 < n_out and out_times[k0] <= 0.0:
        emit(k0)
        k0 += 1

    gmax = float(gamma[lo:hi + 1].max())
    if gmax <= 0.0:  # nothing can decay (n_exc == 0 or fully absorbed input)
        for k in range(k0, n_out):
            emit(k)
        return e_out, p_out, states, stats

    t_end = float(out_times[-1])
    h = FIRST_STEP / gmax
    h_min = 1e-15 * t_end
    min_rho = 0.0

    for k in range(k0, n_out):
        t_target = float(out_times[k])
        while t < t_target:
            if wins[cur][1] == 0:  # everything in the absorbing ground state
                break
            remaining = t_target - t
            clipped = h >= remaining
            s = remaining if clipped else h

            i_full, i_mid, i_half = [i for i in range(4) if i != cur]
            for i in (i_full, i_mid, i_half):
                clear(i)
            l0, h0 = wins[cur]
            wins[i_full] = _step(gamma, bufs[cur], l0, h0, s, eps_ext, window_eps, bufs[i_full])
            wins[i_mid] = _step(gamma, bufs[cur], l0, h0, 0.5 * s, eps_ext, window_eps, bufs[i_mid])
            wins[i_half] = _step(gamma, bufs[i_mid], *wins[i_mid], 0.5 * s, eps_ext, window_eps, bufs[i_half])

            e_f, p_f = _functionals(gamma, m_idx, bufs[i_full], *wins[i_full])
            e_h, p_h = _functionals(gamma, m_idx, bufs[i_half], *wins[i_half])
            if not (math.isfinite(e_f) and math.isfinite(e_h)
                    and math.isfinite(p_f) and math.isfinite(p_h)):
                stats["status"] = STATUS_NONFINITE
                stats["min_rho"] = min_rho
                return e_out, p_out, states, stats

            est = max(abs(e_f - e_h) / max(e_h, TINY),
                      abs(p_f - p_h) / max(p_h, TINY)) / 3.0
            efold = s * p_h / max(e_h, TINY)
            bound = error_tol * max(efold, EFOLD_FLOOR)

            if est <= bound:
                clear(cur)
                cur = i_half
                t = t_target if clipped else t + s
                stats["n_steps"] += 1
                l, hh = wins[cur]
                m = float(bufs[cur][l:hh + 1].min())
                if m < min_rho:
                    min_rho = m
                factor = min(GROW_MAX, max(0.5, SAFETY * (bound / max(est, TINY)) ** (1.0 / 3.0)))
                h = s * factor
            else:
                stats["n_rejected"] += 1
                factor = min(0.9, max(SHRINK_MIN, SAFETY * (bound / est) ** (1.0 / 3.0)))
                h = s * factor
                if h < h_min:
                    stats["status"] = STATUS_UNDERFLOW
                    stats["min_rho"] = min_rho
                    return e_out, p_out, states, stats
        emit(k)

    stats["min_rho"] = min_rho
    return e_out, p_out, states, stats


def run_rk4(gamma, rho0, out_times, dt, store_states):
    """Fixed-step classical RK4 over the full level range (small ladders).

    The caller is responsible for enforcing the stability bound
    dt < 2.78 / max(Gamma).  Returns (E, P, states, stats).
    """
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    n_levels = gamma.shape[0]
    n_out = out_times.shape[0]
    m_idx = np.arange(n_levels, dtype=np.float64)

    e_out = np.zeros(n_out)
    p_out = np.zeros(n_out)
    states = np.zeros((n_out, n_levels)) if store_states else None
    stats = {"n_steps": 0, "n_rejected": 0, "status": STATUS_OK, "min_rho": 0.0}

    rho = np.ascontiguousarray(rho0, dtype=np.float64).copy()

    def rhs(r):
        d = -gamma * r
        d[:-1] += gamma[1:] * r[1:]
        return d

    t = 0.0
    min_rho = 0.0
    for k in range(n_out):
        t_target = float(out_times[k])
        while t < t_target:
            remaining = t_target - t
            clipped = dt >= remaining
            s = remaining if clipped else dt
            k1 = rhs(rho)
            k2 = rhs(rho + (0.5 * s) * k1)
            k3 = rhs(rho + (0.5 * s) * k2)
            k4 = rhs(rho + s * k3)
            rho += (s / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            t = t_target if clipped else t + s
            stats["n_steps"] += 1
        xc = np.maximum(rho, 0.0)
        e_out[k] = float(np.dot(m_idx, xc))
        p_out[k] = float(np.dot(gamma, xc))
        m = float(rho.min())
        if m < min_rho:
            min_rho = m
        if not math.isfinite(e_out[k]):
            stats["status"] = STATUS_NONFINITE
            break
        if store_states:
            states[k] = xc

    stats["min_rho"] = min_rho
    return e_out, p_out, states, stats
