# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop kernel; mirrors ``qtrack._pykernel.run_loop`` step for step."""

from libc.math cimport erfc, exp, fabs, isfinite, sqrt

cdef double SQRT2 = sqrt(2.0)


cdef inline double _cdf(int code, double scale, double x) noexcept nogil:
    cdef double z, e
    if code == 0:
        return 0.5 * erfc(-x / (scale * SQRT2))
    if code == 1:
        z = x / scale
        if z >= 0:
            return 1.0 / (1.0 + exp(-z))
        e = exp(z)
        return e / (1.0 + e)
    if code == 2:
        if x <= -scale:
            return 0.0
        if x >= scale:
            return 1.0
        return (x + scale) / (2.0 * scale)
    return 1.0 if x >= 0.0 else 0.0


def run_loop(double th1, double th2, const double[::1] thresholds, const double[::1] weights,
             int noise_code, double noise_scale,
             double lo1, double hi1, double lo2, double hi2,
             double th0_1, double th0_2, double eps, bint guard_enabled,
             const double[::1] w, const double[::1] ystar, double limit,
             double[::1] u_out, double[::1] y_out, long long[::1] s_out,
             double[::1] sbar_out, double[:, ::1] th_out, unsigned char[::1] guard_out):
    cdef Py_ssize_t m = thresholds.shape[0]
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t i, s, p
    cdef long long k
    cdef double a1 = th0_1, a2 = th0_2
    cdef double d, u, u_prev, u_next, y, sbar, z, total, f_lo, f_hi, g, r1, r2
    cdef bint active
    cdef int status = 0
    cdef long long step = 0

    if fabs(a1) < eps and not guard_enabled:
        return 2, 0
    if fabs(a1) >= eps:
        d = a1
    elif a1 < 0:
        d = -eps
    else:
        d = eps
    u = ystar[0] / d - (a2 / d) * 0.0
    u_prev = 0.0

    with nogil:
        for i in range(n):
            k = i + 1
            y = u * th1 + u_prev * th2 + w[i]
            if not (isfinite(y) and fabs(y) <= limit and isfinite(u) and fabs(u) <= limit):
                status = 1
                step = k
                break
            s = 0
            while s < m and thresholds[s] < y:
                s += 1
            sbar = weights[s]

            z = u * a1 + u_prev * a2
            total = 0.0
            f_lo = 0.0
            for p in range(m + 1):
                if p < m:
                    f_hi = _cdf(noise_code, noise_scale, thresholds[p] - z)
                else:
                    f_hi = 1.0
                total += weights[p] * (f_hi - f_lo)
                f_lo = f_hi
            g = (total - sbar) / k
            r1 = a1 + u * g
            r2 = a2 + u_prev * g
            a1 = lo1 if r1 < lo1 else (hi1 if r1 > hi1 else r1)
            a2 = lo2 if r2 < lo2 else (hi2 if r2 > hi2 else r2)
            if not (isfinite(a1) and isfinite(a2)):
                status = 1
                step = k
                break

            active = fabs(a1) < eps
            u_out[i] = u
            y_out[i] = y
            s_out[i] = s
            sbar_out[i] = sbar
            th_out[i, 0] = a1
            th_out[i, 1] = a2
            guard_out[i] = active
            if active and not guard_enabled:
                status = 2
                step = k
                break
            if not active:
                d = a1
            elif a1 < 0:
                d = -eps
            else:
                d = eps
            u_next = ystar[k] / d - (a2 / d) * u
            u_prev = u
            u = u_next

    return status, step
