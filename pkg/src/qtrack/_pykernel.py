"""Pure-Python closed-loop kernel.

Same signature and floating-point operation order as the compiled
``_kernel.run_loop``; used when the extension is unavailable or when
``QTRACK_BACKEND=python`` is set.
"""
from math import erfc, exp, isfinite

SQRT2 = 2.0 ** 0.5

OK = 0
DIVERGED = 1
GUARD_TRIPPED = 2


def _cdf(code, scale, x):
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


def run_loop(th1, th2, thresholds, weights, noise_code, noise_scale,
             lo1, hi1, lo2, hi2, th0_1, th0_2, eps, guard_enabled,
             w, ystar, limit, u_out, y_out, s_out, sbar_out, th_out, guard_out):
    """Run steps k = 1..len(w); return ``(status, step)``.

    ``ystar`` holds y*(1)..y*(K+1).  Outputs are written in place; on a
    non-zero status only rows before ``step`` are meaningful.
    """
    c = [float(v) for v in thresholds]
    b = [float(v) for v in weights]
    m = len(c)
    ws = w.tolist()
    ys = ystar.tolist()
    n = len(ws)
    us, yv, sv, sb, t1, t2, gv = [], [], [], [], [], [], []

    a1, a2 = float(th0_1), float(th0_2)
    status, step = OK, 0

    # initial input from theta_hat(0), with u(0) = 0
    if abs(a1) < eps and not guard_enabled:
        status, step = GUARD_TRIPPED, 0
        n = 0
    d = a1 if abs(a1) >= eps else (-eps if a1 < 0 else eps)
    u = ys[0] / d - (a2 / d) * 0.0
    u_prev = 0.0

    for i in range(n):
        k = i + 1
        y = u * th1 + u_prev * th2 + ws[i]
        if not (isfinite(y) and abs(y) <= limit and isfinite(u) and abs(u) <= limit):
            status, step = DIVERGED, k
            break
        s = 0
        while s < m and c[s] < y:
            s += 1
        sbar = b[s]

        z = u * a1 + u_prev * a2
        total = 0.0
        f_lo = 0.0
        for p in range(m + 1):
            f_hi = _cdf(noise_code, noise_scale, c[p] - z) if p < m else 1.0
            total += b[p] * (f_hi - f_lo)
            f_lo = f_hi
        g = (total - sbar) / k
        r1 = a1 + u * g
        r2 = a2 + u_prev * g
        a1 = lo1 if r1 < lo1 else hi1 if r1 > hi1 else r1
        a2 = lo2 if r2 < lo2 else hi2 if r2 > hi2 else r2
        if not (isfinite(a1) and isfinite(a2)):
            status, step = DIVERGED, k
            break

        active = abs(a1) < eps
        us.append(u)
        yv.append(y)
        sv.append(s)
        sb.append(sbar)
        t1.append(a1)
        t2.append(a2)
        gv.append(active)
        if active and not guard_enabled:
            status, step = GUARD_TRIPPED, k
            break
        d = a1 if not active else (-eps if a1 < 0 else eps)
        u_next = ys[k] / d - (a2 / d) * u
        u_prev = u
        u = u_next

    j = len(us)
    u_out[:j] = us
    y_out[:j] = yv
    s_out[:j] = sv
    sbar_out[:j] = sb
    th_out[:j, 0] = t1
    th_out[:j, 1] = t2
    guard_out[:j] = gv
    return status, step
