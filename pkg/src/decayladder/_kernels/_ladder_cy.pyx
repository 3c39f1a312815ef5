# cython: language_level=3
"""Compiled integration kernels.

Same algorithms and controller constants as _ladder_py (see its module
docstring); scalar C loops instead of vectorized numpy, which is what makes
the forward substitution down the ladder cheap enough for ~1e6-level runs.
"""

import numpy as np

from libc.math cimport isfinite, pow

cdef int C_OK = 0
cdef int C_NONFINITE = 1
cdef int C_UNDERFLOW = 2

STATUS_OK = C_OK
STATUS_NONFINITE = C_NONFINITE
STATUS_UNDERFLOW = C_UNDERFLOW

cdef double GROW_MAX = 1.3
cdef double SHRINK_MIN = 0.1
cdef double SAFETY = 0.85
cdef double EFOLD_FLOOR = 1e-3
cdef double FIRST_STEP = 0.1
cdef double TINY = 1e-300


cdef inline void _zero(double* a, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(lo, hi + 1):
        a[i] = 0.0


cdef inline void _step(const double* g, const double* src, Py_ssize_t lo, Py_ssize_t hi,
                       double s, double eps_ext, double window_eps,
                       double* dst, Py_ssize_t* out_lo, Py_ssize_t* out_hi) noexcept nogil:
    """One implicit-trapezoid step: forward substitution from hi down the ladder.

    Levels below the source window are brought in while the transported tail
    stays above eps_ext; decayed-out top levels are frozen with their residual
    pushed one level down.
    """
    cdef double half = 0.5 * s
    cdef Py_ssize_t m, lo_new, ihi
    cdef double sm, sm1, x_up, xm, fold

    xm = src[hi] * (1.0 - half * g[hi]) / (1.0 + half * g[hi])
    dst[hi] = xm
    x_up = xm
    lo_new = hi
    for m in range(hi - 1, -1, -1):
        if m >= lo:
            sm = src[m]
        else:
            sm = 0.0
        if m + 1 >= lo:
            sm1 = src[m + 1]
        else:
            sm1 = 0.0
        xm = (sm * (1.0 - half * g[m]) + half * g[m + 1] * (sm1 + x_up)) \
            / (1.0 + half * g[m])
        dst[m] = xm
        x_up = xm
        lo_new = m
        if m < lo and xm <= eps_ext:
            break

    # Trim the sub-threshold bottom fringe, folding its mass into the edge;
    # without this the window bottom creeps down one level per step and the
    # per-step work grows toward the full ladder size.
    fold = 0.0
    while lo_new < hi and dst[lo_new] <= eps_ext:
        fold += dst[lo_new]
        dst[lo_new] = 0.0
        lo_new += 1
    dst[lo_new] += fold

    ihi = hi
    while ihi > lo_new and dst[ihi] <= window_eps:
        dst[ihi - 1] += dst[ihi]
        dst[ihi] = 0.0
        ihi -= 1
    out_lo[0] = lo_new
    out_hi[0] = ihi


cdef inline void _funcs(const double* g, const double* x, Py_ssize_t lo, Py_ssize_t hi,
                        double* e, double* p) noexcept nogil:
    cdef Py_ssize_t m
    cdef double xc, ee = 0.0, pp = 0.0
    for m in range(lo, hi + 1):
        xc = x[m]
        if xc > 0.0:
            ee += m * xc
            pp += g[m] * xc
    e[0] = ee
    p[0] = pp


cdef inline double _min_on(const double* x, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef Py_ssize_t m
    cdef double mn = x[lo]
    for m in range(lo + 1, hi + 1):
        if x[m] < mn:
            mn = x[m]
    return mn


def run_trapezoid(object gamma_in, object rho0_in, object out_times_in,
                  double error_tol, double window_eps, bint store_states):
    """Adaptive implicit-trapezoid integration; see _ladder_py.run_trapezoid."""
    gamma_arr = np.ascontiguousarray(gamma_in, dtype=np.float64)
    rho0_arr = np.ascontiguousarray(rho0_in, dtype=np.float64)
    t_out_arr = np.ascontiguousarray(out_times_in, dtype=np.float64)

    cdef double[::1] gamma = gamma_arr
    cdef double[::1] rho0 = rho0_arr
    cdef double[::1] out_times = t_out_arr
    cdef Py_ssize_t n_levels = gamma.shape[0]
    cdef Py_ssize_t n_out = out_times.shape[0]

    e_arr = np.zeros(n_out)
    p_arr = np.zeros(n_out)
    cdef double[::1] e_out = e_arr
    cdef double[::1] p_out = p_arr
    states_arr = np.zeros((n_out, n_levels)) if store_states else np.zeros((1, 1))
    cdef double[:, ::1] states = states_arr

    work = [np.zeros(n_levels) for _ in range(4)]
    cdef double[::1] wa = work[0]
    cdef double[::1] wb = work[1]
    cdef double[::1] wc = work[2]
    cdef double[::1] wd = work[3]
    cdef double* buf[4]
    buf[0] = &wa[0]
    buf[1] = &wb[0]
    buf[2] = &wc[0]
    buf[3] = &wd[0]
    cdef Py_ssize_t wlo[4]
    cdef Py_ssize_t whi[4]

    cdef const double* g = &gamma[0]
    cdef double eps_ext = window_eps * 1e-3
    cdef Py_ssize_t i, k, m, cur, i_full, i_mid, i_half, k0
    cdef Py_ssize_t lo = 0, hi = 0
    cdef bint have_mass = False
    cdef int status = C_OK
    cdef long n_steps = 0, n_rejected = 0
    cdef double t, t_target, t_end, h, h_min, s, remaining
    cdef double e_f, p_f, e_h, p_h, est, efold, bound, factor, gmax, mn, min_rho
    cdef bint clipped

    for m in range(n_levels):
        if rho0[m] != 0.0:
            if not have_mass:
                lo = m
                have_mass = True
            hi = m

    cur = 0
    for i in range(4):
        wlo[i] = 0
        whi[i] = -1
    for m in range(lo, hi + 1):
        buf[cur][m] = rho0[m]
    wlo[cur] = lo
    whi[cur] = hi

    k0 = 0
    min_rho = 0.0
    with nogil:
        while k0 < n_out and out_times[k0] <= 0.0:
            _funcs(g, buf[cur], wlo[cur], whi[cur], &e_f, &p_f)
            e_out[k0] = e_f
            p_out[k0] = p_f
            if store_states:
                for m in range(wlo[cur], whi[cur] + 1):
                    if buf[cur][m] > 0.0:
                        states[k0, m] = buf[cur][m]
            k0 += 1

    gmax = 0.0
    for m in range(lo, hi + 1):
        if gamma[m] > gmax:
            gmax = gamma[m]

    if gmax <= 0.0:
        with nogil:
            for k in range(k0, n_out):
                _funcs(g, buf[cur], wlo[cur], whi[cur], &e_f, &p_f)
                e_out[k] = e_f
                p_out[k] = p_f
                if store_states:
                    for m in range(wlo[cur], whi[cur] + 1):
                        if buf[cur][m] > 0.0:
                            states[k, m] = buf[cur][m]
        return e_arr, p_arr, (states_arr if store_states else None), \
            {"n_steps": 0, "n_rejected": 0, "status": 0, "min_rho": 0.0}

    t = 0.0
    t_end = out_times[n_out - 1]
    h = FIRST_STEP / gmax
    h_min = 1e-15 * t_end

    with nogil:
        for k in range(k0, n_out):
            t_target = out_times[k]
            while t < t_target:
                if whi[cur] == 0:  # fully absorbed in the ground state
                    break
                remaining = t_target - t
                clipped = h >= remaining
                s = remaining if clipped else h

                i_full = -1
                i_mid = -1
                i_half = -1
                for i in range(4):
                    if i == cur:
                        continue
                    if whi[i] >= wlo[i]:
                        _zero(buf[i], wlo[i], whi[i])
                        wlo[i] = 0
                        whi[i] = -1
                    if i_full < 0:
                        i_full = i
                    elif i_mid < 0:
                        i_mid = i
                    else:
                        i_half = i

                _step(g, buf[cur], wlo[cur], whi[cur], s, eps_ext, window_eps,
                      buf[i_full], &wlo[i_full], &whi[i_full])
                _step(g, buf[cur], wlo[cur], whi[cur], 0.5 * s, eps_ext, window_eps,
                      buf[i_mid], &wlo[i_mid], &whi[i_mid])
                _step(g, buf[i_mid], wlo[i_mid], whi[i_mid], 0.5 * s, eps_ext, window_eps,
                      buf[i_half], &wlo[i_half], &whi[i_half])

                _funcs(g, buf[i_full], wlo[i_full], whi[i_full], &e_f, &p_f)
                _funcs(g, buf[i_half], wlo[i_half], whi[i_half], &e_h, &p_h)
                if not (isfinite(e_f) and isfinite(e_h) and isfinite(p_f) and isfinite(p_h)):
                    status = C_NONFINITE
                    break

                est = e_h if e_h > TINY else TINY
                est = (e_f - e_h if e_f > e_h else e_h - e_f) / est
                bound = p_h if p_h > TINY else TINY
                bound = (p_f - p_h if p_f > p_h else p_h - p_f) / bound
                if bound > est:
                    est = bound
                est /= 3.0
                efold = s * p_h / (e_h if e_h > TINY else TINY)
                bound = error_tol * (efold if efold > EFOLD_FLOOR else EFOLD_FLOOR)

                if est <= bound:
                    _zero(buf[cur], wlo[cur], whi[cur])
                    wlo[cur] = 0
                    whi[cur] = -1
                    cur = i_half
                    t = t_target if clipped else t + s
                    n_steps += 1
                    mn = _min_on(buf[cur], wlo[cur], whi[cur])
                    if mn < min_rho:
                        min_rho = mn
                    factor = SAFETY * pow(bound / (est if est > TINY else TINY), 1.0 / 3.0)
                    if factor > GROW_MAX:
                        factor = GROW_MAX
                    elif factor < 0.5:
                        factor = 0.5
                    h = s * factor
                else:
                    n_rejected += 1
                    factor = SAFETY * pow(bound / est, 1.0 / 3.0)
                    if factor > 0.9:
                        factor = 0.9
                    elif factor < SHRINK_MIN:
                        factor = SHRINK_MIN
                    h = s * factor
                    if h < h_min:
                        status = C_UNDERFLOW
                        break
            if status != C_OK:
                break
            _funcs(g, buf[cur], wlo[cur], whi[cur], &e_f, &p_f)
            e_out[k] = e_f
            p_out[k] = p_f
            if store_states:
                for m in range(wlo[cur], whi[cur] + 1):
                    if buf[cur][m] > 0.0:
                        states[k, m] = buf[cur][m]

    stats = {"n_steps": int(n_steps), "n_rejected": int(n_rejected),
             "status": int(status), "min_rho": float(min_rho)}
    return e_arr, p_arr, (states_arr if store_states else None), stats


def run_rk4(object gamma_in, object rho0_in, object out_times_in,
            double dt, bint store_states):
    """Fixed-step classical RK4 over the full level range; see _ladder_py.run_rk4."""
    gamma_arr = np.ascontiguousarray(gamma_in, dtype=np.float64)
    rho0_arr = np.ascontiguousarray(rho0_in, dtype=np.float64)
    t_out_arr = np.ascontiguousarray(out_times_in, dtype=np.float64)

    cdef double[::1] gamma = gamma_arr
    cdef double[::1] out_times = t_out_arr
    cdef Py_ssize_t n_levels = gamma.shape[0]
    cdef Py_ssize_t n_out = out_times.shape[0]

    rho_arr = rho0_arr.copy()
    e_arr = np.zeros(n_out)
    p_arr = np.zeros(n_out)
    cdef double[::1] rho = rho_arr
    cdef double[::1] e_out = e_arr
    cdef double[::1] p_out = p_arr
    states_arr = np.zeros((n_out, n_levels)) if store_states else np.zeros((1, 1))
    cdef double[:, ::1] states = states_arr

    scratch = [np.zeros(n_levels) for _ in range(5)]
    cdef double[::1] k1 = scratch[0]
    cdef double[::1] k2 = scratch[1]
    cdef double[::1] k3 = scratch[2]
    cdef double[::1] k4 = scratch[3]
    cdef double[::1] tmp = scratch[4]

    cdef Py_ssize_t k, m
    cdef int status = C_OK
    cdef long n_steps = 0
    cdef double t = 0.0, t_target, s, remaining, ee, pp, xc, mn, min_rho = 0.0
    cdef bint clipped

    with nogil:
        for k in range(n_out):
            t_target = out_times[k]
            while t < t_target:
                remaining = t_target - t
                clipped = dt >= remaining
                s = remaining if clipped else dt

                for m in range(n_levels - 1):
                    k1[m] = -gamma[m] * rho[m] + gamma[m + 1] * rho[m + 1]
                k1[n_levels - 1] = -gamma[n_levels - 1] * rho[n_levels - 1]
                for m in range(n_levels):
                    tmp[m] = rho[m] + 0.5 * s * k1[m]
                for m in range(n_levels - 1):
                    k2[m] = -gamma[m] * tmp[m] + gamma[m + 1] * tmp[m + 1]
                k2[n_levels - 1] = -gamma[n_levels - 1] * tmp[n_levels - 1]
                for m in range(n_levels):
                    tmp[m] = rho[m] + 0.5 * s * k2[m]
                for m in range(n_levels - 1):
                    k3[m] = -gamma[m] * tmp[m] + gamma[m + 1] * tmp[m + 1]
                k3[n_levels - 1] = -gamma[n_levels - 1] * tmp[n_levels - 1]
                for m in range(n_levels):
                    tmp[m] = rho[m] + s * k3[m]
                for m in range(n_levels - 1):
                    k4[m] = -gamma[m] * tmp[m] + gamma[m + 1] * tmp[m + 1]
                k4[n_levels - 1] = -gamma[n_levels - 1] * tmp[n_levels - 1]
                for m in range(n_levels):
                    rho[m] += (s / 6.0) * (k1[m] + 2.0 * (k2[m] + k3[m]) + k4[m])

                t = t_target if clipped else t + s
                n_steps += 1

            ee = 0.0
            pp = 0.0
            mn = rho[0]
            for m in range(n_levels):
                xc = rho[m]
                if xc < mn:
                    mn = xc
                if xc > 0.0:
                    ee += m * xc
                    pp += gamma[m] * xc
                    if store_states:
                        states[k, m] = xc
            e_out[k] = ee
            p_out[k] = pp
            if mn < min_rho:
                min_rho = mn
            if not isfinite(ee):
                status = C_NONFINITE
                break

    stats = {"n_steps": int(n_steps), "n_rejected": 0,
             "status": int(status), "min_rho": float(min_rho)}
    return e_arr, p_arr, (states_arr if store_states else None), stats
