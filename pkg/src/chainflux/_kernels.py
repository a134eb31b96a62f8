"""Compiled inner loops.

Conventions shared by all kernels:

* mass arrays are site-major, ``bt[i, s]`` is B_{i+1} of sample ``s``;
* the two-term recursion is run in difference form, state (D_n, D_n - D_{n-1}),
  which keeps the O(w^2) update from being swamped by rounding;
* rescaling is by exact powers of two so it never perturbs the mantissa;
* torus points are kept as a fractional part in [0, 1) plus an integer winding.
"""
import math

import numpy as np
from numba import njit

PI = math.pi
PI2 = math.pi * math.pi
BIG = 2.0 ** 200
SMALL = 2.0 ** -200
LOG2 = math.log(2.0)


# --------------------------------------------------------------------------
# transfer recursion


@njit(cache=True)
def d_rec(v0, vm1, w, b):
    """Single trajectory; returns (d, dprev, exp2) with max(|d|, |dprev|) in [1/2, 1)."""
    e = PI2 * w * w
    d = v0
    q = v0 - vm1
    ex = 0
    m, k = math.frexp(max(abs(d), abs(d - q)))
    d = math.ldexp(d, -k)
    q = math.ldexp(q, -k)
    ex += k
    for i in range(b.size):
        q -= e * (1.0 + b[i]) * d
        d += q
        m, k = math.frexp(max(abs(d), abs(d - q)))
        if k != 0:
            d = math.ldexp(d, -k)
            q = math.ldexp(q, -k)
            ex += k
    return d, d - q, ex


@njit(cache=True)
def d_rec_trace(v0, vm1, w, b):
    """Unrenormalized (D_0 .. D_n) in difference form; for moderate n only."""
    e = PI2 * w * w
    out = np.empty(b.size + 1)
    d = v0
    q = v0 - vm1
    out[0] = d
    for i in range(b.size):
        q -= e * (1.0 + b[i]) * d
        d += q
        out[i + 1] = d
    return out


@njit(cache=True)
def product_step(m, log_scale, a11):
    """A @ m with A = [[a11, -1], [1, 0]]; Frobenius renormalization into [1/2, 2]."""
    r00 = a11 * m[0, 0] - m[1, 0]
    r01 = a11 * m[0, 1] - m[1, 1]
    m[1, 0] = m[0, 0]
    m[1, 1] = m[0, 1]
    m[0, 0] = r00
    m[0, 1] = r01
    f = math.sqrt(r00 * r00 + r01 * r01 + m[1, 0] * m[1, 0] + m[1, 1] * m[1, 1])
    if f > 2.0 or f < 0.5:
        m /= f
        log_scale += math.log(f)
    return log_scale


@njit(cache=True)
def lyapunov_batch(bt, w, n0):
    """log Frobenius norm of Q_n and Q_{n0} for each sample column."""
    n, S = bt.shape
    e = PI2 * w * w
    out_n = np.empty(S)
    out_0 = np.empty(S)
    for s in range(S):
        # columns of Q: e1 state and e2 state, difference form
        d1 = 1.0
        q1 = 1.0
        d2 = 0.0
        q2 = -1.0
        ls = 0.0
        for i in range(n):
            t = e * (1.0 + bt[i, s])
            q1 -= t * d1
            d1 += q1
            q2 -= t * d2
            d2 += q2
            if (i & 15) == 15:
                mx = max(max(abs(d1), abs(q1)), max(abs(d2), abs(q2)))
                if mx > BIG:
                    d1 *= SMALL
                    q1 *= SMALL
                    d2 *= SMALL
                    q2 *= SMALL
                    ls += 200.0 * LOG2
            if i + 1 == n0:
                p1 = d1 - q1
                p2 = d2 - q2
                out_0[s] = ls + 0.5 * math.log(d1 * d1 + p1 * p1 + d2 * d2 + p2 * p2)
        p1 = d1 - q1
        p2 = d2 - q2
        out_n[s] = ls + 0.5 * math.log(d1 * d1 + p1 * p1 + d2 * d2 + p2 * p2)
        if n0 == 0:
            out_0[s] = 0.5 * math.log(2.0)
    return out_n, out_0


# --------------------------------------------------------------------------
# current density


@njit(cache=True, nogil=True)
def current_density_batch(bt, nodes, cw, f1, fn):
    """j_n at every (sample, node).

    Bath couplings are c1 = cw[k] f1[s], cn = cw[k] fn[s]; then
    j = c1 cn / (Q11^2 + cn^2 Q21^2 + c1^2 Q12^2 + c1^2 cn^2 Q22^2 + 2 c1 cn)
    where Q11, Q21 = D_n(e1), D_{n-1}(e1) and Q12, Q22 = D_n(e2), D_{n-1}(e2).
    Samples run in the innermost loop so the update vectorizes.
    """
    n, S = bt.shape
    W = nodes.size
    out = np.empty((S, W))
    d1 = np.empty(S)
    q1 = np.empty(S)
    d2 = np.empty(S)
    q2 = np.empty(S)
    E1 = np.zeros(S, dtype=np.int64)
    E2 = np.zeros(S, dtype=np.int64)
    for k in range(W):
        w = nodes[k]
        e = PI2 * w * w
        d1[:] = 1.0
        q1[:] = 1.0
        d2[:] = 0.0
        q2[:] = -1.0
        E1[:] = 0
        E2[:] = 0
        for i0 in range(0, n, 16):
            i1 = min(n, i0 + 16)
            for i in range(i0, i1):
                row = bt[i]
                for s in range(S):
                    t = e * (1.0 + row[s])
                    a = q1[s] - t * d1[s]
                    q1[s] = a
                    d1[s] += a
                    c = q2[s] - t * d2[s]
                    q2[s] = c
                    d2[s] += c
            for s in range(S):
                if abs(d1[s]) > BIG or abs(q1[s]) > BIG:
                    d1[s] *= SMALL
                    q1[s] *= SMALL
                    E1[s] += 1
                if abs(d2[s]) > BIG or abs(q2[s]) > BIG:
                    d2[s] *= SMALL
                    q2[s] *= SMALL
                    E2[s] += 1
        for s in range(S):
            c1 = cw[k] * f1[s]
            cn = cw[k] * fn[s]
            p1 = d1[s] - q1[s]
            p2 = d2[s] - q2[s]
            a1 = d1[s] * d1[s] + cn * cn * p1 * p1
            a2 = c1 * c1 * (d2[s] * d2[s] + cn * cn * p2 * p2)
            den = math.ldexp(a1, 400 * E1[s]) + math.ldexp(a2, 400 * E2[s]) + 2.0 * c1 * cn
            out[s, k] = c1 * cn / den
    return out


@njit(cache=True, nogil=True)
def sturm_counts(b, lams):
    """Generalized eigenvalues of (T, M) below each lam, T = tridiag(-1, 2, -1), M = diag(1 + b).

    Counts negative pivots of T - lam M.  The pivots are the ratios
    D_k / D_{k-1}, so this is also the number of zeros of D_n(e1) below
    w = sqrt(lam) / pi.
    """
    L = lams.size
    r = np.full(L, np.inf)
    neg = np.zeros(L, dtype=np.int64)
    for k in range(b.size):
        m = 1.0 + b[k]
        for j in range(L):
            x = 2.0 - lams[j] * m - 1.0 / r[j]
            x = x if x != 0.0 else -1e-300
            neg[j] += x < 0.0
            r[j] = x
    return neg


@njit(cache=True, nogil=True)
def _nodes_pass(b, ws, c1, cn, deriv):
    """Recursion at many frequencies for one mass sequence.

    Returns j (zero past the float range), log2 of the denominator, and
    Q11 / Q11' (the Newton step for a zero of D_n(e1)) together with
    log2 |Q11'| when ``deriv`` is set.
    """
    W = ws.size
    d1 = np.ones(W)
    q1 = np.ones(W)
    d2 = np.zeros(W)
    q2 = np.full(W, -1.0)
    dd = np.zeros(W)
    dq = np.zeros(W)
    E1 = np.zeros(W, dtype=np.int64)
    E2 = np.zeros(W, dtype=np.int64)
    e = np.empty(W)
    for j in range(W):
        e[j] = PI2 * ws[j] * ws[j]
    n = b.size
    for i0 in range(0, n, 16):
        i1 = min(n, i0 + 16)
        for i in range(i0, i1):
            m = 1.0 + b[i]
            if deriv:
                for j in range(W):
                    t = e[j] * m
                    da = dq[j] - 2.0 * PI2 * ws[j] * m * d1[j] - t * dd[j]
                    dq[j] = da
                    dd[j] += da
                    x = q1[j] - t * d1[j]
                    q1[j] = x
                    d1[j] += x
                    y = q2[j] - t * d2[j]
                    q2[j] = y
                    d2[j] += y
            else:
                for j in range(W):
                    t = e[j] * m
                    x = q1[j] - t * d1[j]
                    q1[j] = x
                    d1[j] += x
                    y = q2[j] - t * d2[j]
                    q2[j] = y
                    d2[j] += y
        for j in range(W):
            if abs(d1[j]) > BIG or abs(q1[j]) > BIG:
                d1[j] *= SMALL
                q1[j] *= SMALL
                dd[j] *= SMALL
                dq[j] *= SMALL
                E1[j] += 1
            if abs(d2[j]) > BIG or abs(q2[j]) > BIG:
                d2[j] *= SMALL
                q2[j] *= SMALL
                E2[j] += 1
    jv = np.zeros(W)
    lden = np.empty(W)
    step = np.zeros(W)
    lder = np.zeros(W)
    for j in range(W):
        p1 = d1[j] - q1[j]
        p2 = d2[j] - q2[j]
        a1 = d1[j] * d1[j] + cn[j] * cn[j] * p1 * p1
        a2 = c1[j] * c1[j] * (d2[j] * d2[j] + cn[j] * cn[j] * p2 * p2)
        L1 = (math.log2(a1) if a1 > 0.0 else -3000.0) + 400.0 * E1[j]
        L2 = (math.log2(a2) if a2 > 0.0 else -3000.0) + 400.0 * E2[j]
        cc = 2.0 * c1[j] * cn[j]
        if max(L1, L2) > 1000.0:
            lden[j] = max(L1, L2)
        else:
            den = 2.0 ** L1 + 2.0 ** L2 + cc
            lden[j] = math.log2(den)
            jv[j] = c1[j] * cn[j] / den
        if deriv:
            step[j] = d1[j] / dd[j] if dd[j] != 0.0 else 0.0
            lder[j] = (math.log2(abs(dd[j])) if dd[j] != 0.0 else -3000.0) + 200.0 * E1[j]
    return jv, lden, step, lder


@njit(cache=True, nogil=True)
def _couplings(ws, c_scale, c_pow, f1, fn):
    c1 = np.empty(ws.size)
    cn = np.empty(ws.size)
    for j in range(ws.size):
        cw = c_scale * ws[j] ** c_pow
        c1[j] = cw * f1
        cn[j] = cw * fn
    return c1, cn


@njit(cache=True, nogil=True)
def current_resonance_integrals(bt, A, B, t, wt, c_scale, c_pow, f1, fn, kappa):
    """Per-sample integral of j_n over [A, B], resolved around every resonance.

    The zeros w_k of D_n(e1) in (A, B) are bracketed by bisection on the
    Sturm count and polished by Newton steps.  Near w_k the density is
    Lorentzian, j ~ 1 / (den_k + Q11'^2 (w - w_k)^2), with half width
    G_k = sqrt(den_k) / |Q11'|.  Cells split at midpoints between zeros.
    Within kappa G_k of the zero the map w = w_k + G_k tan(theta) makes the
    peak smooth; further out w = w_k + exp(v) keeps the neighbouring peaks
    away from the real axis.  Each piece gets the Gauss-Legendre rule
    (t, wt) on [-1, 1].  Returns (integrals, zero counts).
    """
    n, S = bt.shape
    out = np.zeros(S)
    counts = np.zeros(S, dtype=np.int64)
    p = t.size
    ends = np.array([PI2 * A * A, PI2 * B * B])
    for s in range(S):
        b = bt[:, s].copy()
        k = sturm_counts(b, ends)
        m = k[1] - k[0]
        counts[s] = m
        if m == 0:
            # no resonance: plain Gauss-Legendre on 16 equal panels
            h = (B - A) / 16.0
            ws = np.empty(16 * p)
            wq = np.empty(16 * p)
            for q in range(16):
                for i in range(p):
                    ws[q * p + i] = A + h * (q + 0.5 * (t[i] + 1.0))
                    wq[q * p + i] = 0.5 * h * wt[i]
            c1, cn = _couplings(ws, c_scale, c_pow, f1[s], fn[s])
            out[s] = np.sum(wq * _nodes_pass(b, ws, c1, cn, False)[0])
            continue
        target = k[0] + np.arange(m)
        lo = np.full(m, A)
        hi = np.full(m, B)
        mid = np.empty(m)
        for _ in range(34):
            for r in range(m):
                mid[r] = 0.5 * (lo[r] + hi[r])
                mid[r] = PI2 * mid[r] * mid[r]
            cnt = sturm_counts(b, mid)
            for r in range(m):
                x = 0.5 * (lo[r] + hi[r])
                if cnt[r] > target[r]:
                    hi[r] = x
                else:
                    lo[r] = x
        roots = 0.5 * (lo + hi)
        lden = np.empty(m)
        lder = np.empty(m)
        for _ in range(2):
            c1, cn = _couplings(roots, c_scale, c_pow, f1[s], fn[s])
            _, lden, step, lder = _nodes_pass(b, roots, c1, cn, True)
            for r in range(m):
                x = roots[r] - step[r]
                if lo[r] <= x <= hi[r]:
                    roots[r] = x
        widths = np.empty(m)
        for r in range(m):
            g = 0.5 * lden[r] - lder[r]
            widths[r] = 2.0 ** g if g < 0.0 else 1.0
        # quadrature nodes: four pieces of p nodes per zero
        ws = np.zeros(4 * p * m)
        wq = np.zeros(4 * p * m)
        for r in range(m):
            left = A if r == 0 else 0.5 * (roots[r - 1] + roots[r])
            right = B if r == m - 1 else 0.5 * (roots[r] + roots[r + 1])
            w0 = roots[r]
            G = widths[r]
            for side in range(2):
                sgn = -1.0 if side == 0 else 1.0
                L = (w0 - left) if side == 0 else (right - w0)
                base = (4 * r + 2 * side) * p
                if L <= 0.0:
                    continue
                tb = math.atan(min(L, kappa * G) / G)
                hh = 0.5 * tb
                for i in range(p):
                    th = hh * (t[i] + 1.0)
                    c = math.cos(th)
                    ws[base + i] = w0 + sgn * G * math.tan(th)
                    wq[base + i] = hh * wt[i] * G / (c * c)
                if L > kappa * G:
                    va = math.log(kappa * G)
                    hv = 0.5 * (math.log(L) - va)
                    for i in range(p):
                        x = math.exp(va + hv * (t[i] + 1.0))
                        ws[base + p + i] = w0 + sgn * x
                        wq[base + p + i] = hv * wt[i] * x
        for j in range(ws.size):
            if not ws[j] > 0.0:
                ws[j] = A
                wq[j] = 0.0
        c1, cn = _couplings(ws, c_scale, c_pow, f1[s], fn[s])
        out[s] = np.sum(wq * _nodes_pass(b, ws, c1, cn, False)[0])
    return out, counts


# --------------------------------------------------------------------------
# circle map


@njit(cache=True)
def phi_scalar(x, b, a, sq):
    sx = math.sin(PI * x)
    return math.atan(2.0 * a * sx * sx * b / (sq - a * math.sin(2.0 * PI * x) * b)) / PI


@njit(cache=True)
def chain_single(x0, x0_lo, w, th, th_lo, b, skip_first, trace):
    """One trajectory of X with the exact log-amplitude and the two exponential sums.

    X is carried as a compensated pair (x, x_lo) and the shift as (th, th_lo),
    so the phase keeps its absolute accuracy over long chains.  Returns
    (x_frac, x_lo, winding, log_gamma, s_sum, r_sum, status, path) where path
    holds the lifted X_0..X_n when ``trace`` is set.  status is 0 on success
    and the offending step index + 1 if sin(pi X) vanished.
    """
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    n = b.size
    x = x0 - math.floor(x0)
    k = int(math.floor(x0))
    lo = x0_lo
    lg = 0.0
    ssum = 0.0
    rsum = 0.0
    status = 0
    path = np.empty(n + 1 if trace else 1)
    path[0] = x0
    for i in range(n):
        bi = b[i]
        sx = math.sin(PI * x)
        s2 = math.sin(2.0 * PI * x)
        c2 = math.cos(2.0 * PI * x)
        p = math.atan(2.0 * a * sx * sx * bi / (sq - a * s2 * bi)) / PI
        if not (skip_first and i == 0):
            if sx == 0.0:
                status = i + 1
                break
            d = 2.0 * math.cos(PI * (x + 0.5 * p)) * math.sin(0.5 * PI * p)
            lg -= math.log1p(d / sx)
        ssum += -0.5 * PI * s2 * bi
        rsum += 0.25 * PI2 * (c2 * c2 - c2) * bi * bi
        # two-sum of x + (th + p), the rounding goes to lo
        t = th + p
        y = x + t
        bb = y - x
        lo += (x - (y - bb)) + (t - bb) + th_lo
        f = math.floor(y)
        k += int(f)
        x = y - f
        z = x + lo
        lo -= z - x
        x = z
        if x >= 1.0:
            x -= 1.0
            k += 1
        elif x < 0.0:
            x += 1.0
            k -= 1
        if trace:
            path[i + 1] = x + k
    return x, lo, k, lg, w * ssum, w * w * rsum, status, path


@njit(cache=True)
def chain_batch(x0, w, th, bt, skip_first):
    """Vector of trajectories; x0 has one entry per sample column of bt.

    Returns lifted X_n, log_gamma, s_sum, r_sum and a status array.
    """
    n, S = bt.shape
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    x = np.empty(S)
    k = np.empty(S)
    for s in range(S):
        k[s] = math.floor(x0[s])
        x[s] = x0[s] - k[s]
    lg = np.zeros(S)
    ss = np.zeros(S)
    rs = np.zeros(S)
    st = np.zeros(S, dtype=np.int64)
    for i in range(n):
        row = bt[i]
        amp = not (skip_first and i == 0)
        for s in range(S):
            bi = row[s]
            xs = x[s]
            sx = math.sin(PI * xs)
            cx = math.cos(PI * xs)
            s2 = 2.0 * sx * cx
            c2 = 1.0 - 2.0 * sx * sx
            p = math.atan(2.0 * a * sx * sx * bi / (sq - a * s2 * bi)) / PI
            if amp:
                if sx == 0.0:
                    if st[s] == 0:
                        st[s] = i + 1
                else:
                    d = 2.0 * math.cos(PI * (xs + 0.5 * p)) * math.sin(0.5 * PI * p)
                    lg[s] -= math.log1p(d / sx)
            ss[s] += s2 * bi
            rs[s] += (c2 * c2 - c2) * bi * bi
            y = xs + th + p
            f = math.floor(y)
            k[s] += f
            x[s] = y - f
    xl = x + k
    return xl, lg, -0.5 * PI * w * ss, 0.25 * PI2 * w * w * rs, st


@njit(cache=True)
def chain_positions(x0, w, th, bt):
    """Lifted X_n only (no amplitude); cheapest kernel for density work."""
    n, S = bt.shape
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    x = x0.copy()
    for i in range(n):
        row = bt[i]
        for s in range(S):
            bi = row[s]
            sx = math.sin(PI * x[s])
            cx = math.cos(PI * x[s])
            x[s] += th + math.atan(2.0 * a * sx * sx * bi / (sq - 2.0 * a * sx * cx * bi)) / PI
    return x


@njit(cache=True)
def chain_cos_average(x0, w, th, bt):
    """w * sum_{j=1..n} cos(2 pi X_j) per sample."""
    n, S = bt.shape
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    x = x0.copy()
    acc = np.zeros(S)
    for i in range(n):
        row = bt[i]
        for s in range(S):
            bi = row[s]
            sx = math.sin(PI * x[s])
            cx = math.cos(PI * x[s])
            x[s] += th + math.atan(2.0 * a * sx * sx * bi / (sq - 2.0 * a * sx * cx * bi)) / PI
            acc[s] += math.cos(2.0 * PI * x[s])
    return w * acc


@njit(cache=True)
def joint_batch(w, th, bt):
    """Co-evolve X from theta and from 0 on the same masses.

    Returns lifted X^theta_n, lifted X^0_n, M_n with dM = w phi'(X^theta) B,
    and log(Gamma^0_n / Gamma^theta_n); the X^0 amplitude drops its first
    (0/0) factor, whose limit is 1.
    """
    n, S = bt.shape
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    xt = np.full(S, th)
    xz = np.zeros(S)
    m = np.zeros(S)
    lr = np.zeros(S)
    for i in range(n):
        row = bt[i]
        for s in range(S):
            bi = row[s]
            sx = math.sin(PI * xt[s])
            s2 = math.sin(2.0 * PI * xt[s])
            p = math.atan(2.0 * a * sx * sx * bi / (sq - a * s2 * bi)) / PI
            d = 2.0 * math.cos(PI * (xt[s] + 0.5 * p)) * math.sin(0.5 * PI * p)
            lr[s] += math.log1p(d / sx)
            m[s] += PI * s2 * bi
            xt[s] += th + p
            sx = math.sin(PI * xz[s])
            p = math.atan(2.0 * a * sx * sx * bi / (sq - a * math.sin(2.0 * PI * xz[s]) * bi)) / PI
            if i > 0:
                d = 2.0 * math.cos(PI * (xz[s] + 0.5 * p)) * math.sin(0.5 * PI * p)
                lr[s] -= math.log1p(d / sx)
            xz[s] += th + p
    return xt, xz, w * m, lr


@njit(cache=True)
def s_martingale_batch(x0, w, th, bt):
    """M_n = w sum s(X_{k-1}) B_k per sample, plus max |increment| seen."""
    n, S = bt.shape
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    x = x0.copy()
    m = np.zeros(S)
    mx = 0.0
    for i in range(n):
        row = bt[i]
        for s in range(S):
            bi = row[s]
            sx = math.sin(PI * x[s])
            s2 = math.sin(2.0 * PI * x[s])
            inc = -0.5 * PI * w * s2 * bi
            m[s] += inc
            mx = max(mx, abs(inc))
            x[s] += th + math.atan(2.0 * a * sx * sx * bi / (sq - a * s2 * bi)) / PI
    return m, mx


@njit(cache=True)
def r_block_sums(x0, w, th, bt, block):
    """Block sums w * sum r(X_{i-1}) B_i^2 over consecutive blocks of length ``block``.

    Also returns the lifted position at each block start, shape (S, m).
    """
    n, S = bt.shape
    m = n // block
    a = 0.5 * PI * w
    sq = math.sqrt(1.0 - a * a)
    sums = np.zeros((S, m))
    starts = np.empty((S, m))
    x = x0.copy()
    for j in range(m):
        for s in range(S):
            starts[s, j] = x[s]
        for i in range(j * block, (j + 1) * block):
            row = bt[i]
            for s in range(S):
                bi = row[s]
                sx = math.sin(PI * x[s])
                cx = math.cos(PI * x[s])
                c2 = 1.0 - 2.0 * sx * sx
                sums[s, j] += (c2 * c2 - c2) * bi * bi
                x[s] += th + math.atan(2.0 * a * sx * sx * bi / (sq - 2.0 * a * sx * cx * bi)) / PI
    return 0.25 * PI2 * w * sums, starts
