"""Exponential martingale bounds and the circle-map martingales they are checked on."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .circlemap import phi_map, theta
from .current import block_layout, mass_block, summarize
from .rng import RandomStream

__all__ = [
    "IncrementBoundViolation",
    "MartingaleSample",
    "kappa_m",
    "freedman_bound",
    "azuma_bound",
    "azuma_tail",
    "mgf_estimate",
    "verify_exponential_bound",
    "BoundReport",
    "s_martingale",
    "gamma_table",
    "block_martingale",
    "gamma_tail_experiment",
    "ergodic_average_error",
    "ergodic_rate",
]


class IncrementBoundViolation(ValueError):
    """A martingale sample has an increment larger than its certified bound."""


@dataclass
class MartingaleSample:
    """Terminal values M_n of i.i.d. realizations with their certified constants."""

    values: np.ndarray
    m_bound: float
    v_n: float
    n: int
    max_increment: float = 0.0

    def __post_init__(self):
        if self.max_increment > self.m_bound * (1.0 + 1e-12):
            raise IncrementBoundViolation(
                f"increment {self.max_increment:.3g} exceeds certified bound {self.m_bound:.3g}")


def kappa_m(t, m):
    """(e^{mt} - 1 - mt) / m^2, evaluated with expm1 and a series near zero."""
    if m <= 0:
        raise ValueError("m must be positive")
    x = np.asarray(t, dtype=float) * m
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 + xs * (1.0 / 6.0 + xs * (1.0 / 24.0 + xs / 120.0)))
    out = np.where(small, series, np.expm1(np.where(small, 0.0, x)) - x) / (m * m)
    return float(out) if out.ndim == 0 else out


def freedman_bound(t, m, v_n):
    if v_n < 0:
        raise ValueError("variance budget must be non-negative")
    return np.exp(kappa_m(t, m) * v_n)


def azuma_bound(t, m, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(0.5 * np.asarray(t, dtype=float) ** 2 * m * m * n)


def azuma_tail(r, m, n, cap=True):
    """2 exp(-r^2 / (2 m^2 n)), capped at 1 unless ``cap`` is False."""
    if r <= 0:
        raise ValueError("r must be positive")
    val = 2.0 * math.exp(-r * r / (2.0 * m * m * n))
    return min(1.0, val) if cap else val


def mgf_estimate(values, t):
    """log E e^{tM} and its relative standard error, by log-sum-exp."""
    values = np.asarray(values, dtype=float)
    N = values.size
    a = t * values
    log_mean = float(logsumexp(a) - math.log(N))
    ratio = np.exp(a - log_mean)
    rel = float(np.std(ratio, ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    return log_mean, rel


@dataclass
class BoundReport:
    passed: bool
    rows: list = field(default_factory=list)

    def as_dict(self):
        return {"passed": self.passed, "rows": self.rows}


def verify_exponential_bound(sample, t_grid):
    """Compare the Monte Carlo E e^{tM_n} with the Freedman and Azuma bounds.

    A point passes when estimate <= bound * (1 + 3 rel. stderr) for both bounds.
    """
    if not isinstance(sample, MartingaleSample):
        raise TypeError("expected a MartingaleSample")
    rows = []
    ok = True
    for t in t_grid:
        lm, rel = mgf_estimate(sample.values, t)
        lf = kappa_m(t, sample.m_bound) * sample.v_n
        la = 0.5 * t * t * sample.m_bound ** 2 * sample.n
        slack = math.log1p(3.0 * rel)
        pf = lm <= lf + slack
        pa = lm <= la + slack
        ok &= pf and pa
        rows.append(dict(t=float(t), log_mgf=lm, rel_stderr=rel, log_freedman=float(lf),
                         log_azuma=float(la), margin_freedman=float(lf + slack - lm),
                         margin_azuma=float(la + slack - lm), pass_freedman=bool(pf), pass_azuma=bool(pa)))
    return BoundReport(bool(ok), rows)


def tail_check(sample, multiples=(1.0, 2.0, 3.0)):
    """Empirical P(|M_n| >= r) against the Azuma tail for r = c m sqrt(n)."""
    rows = []
    ok = True
    N = sample.values.size
    for c in multiples:
        r = c * sample.m_bound * math.sqrt(sample.n)
        p = float(np.mean(np.abs(sample.values) >= r))
        se = math.sqrt(max(p * (1 - p), 1.0 / N) / N)
        bound = azuma_tail(r, sample.m_bound, sample.n)
        passed = p <= bound + 3.0 * se
        ok &= passed
        rows.append(dict(r=r, empirical=p, stderr=se, bound=bound, passed=bool(passed)))
    return BoundReport(bool(ok), rows)


# ---------------------------------------------------------------------------
# circle-map martingales


def _starts(x0, size, stream):
    if x0 is None:
        return stream.child(1 << 30).uniform(size)
    return np.full(size, float(x0))


def s_martingale(w, n, samples, dist, seed=0, x0=0.3, block_size=4096, experiment="s-martingale"):
    """M_n = w sum s(X_{k-1}) B_k; |dM| <= w (pi/2) b_max and sum E[dM^2|F] <= n w^2 (pi^2/4) E B^2."""
    th = theta(w)
    stream = RandomStream(seed, (experiment,))
    vals = []
    mx = 0.0
    for k, _, size in block_layout(samples, block_size):
        bt = np.ascontiguousarray(mass_block(dist, stream, k, n, size))
        v, m = K.s_martingale_batch(_starts(x0, size, stream.child(k)), float(w), th, bt)
        vals.append(v)
        mx = max(mx, m)
    m_bound = w * 0.5 * math.pi * dist.b_max
    v_n = n * w * w * 0.25 * math.pi ** 2 * dist.moment2()
    return MartingaleSample(np.concatenate(vals), m_bound, v_n, n, mx)


def gamma_table(w, dist, seed=0, grid=128, samples=20000, experiment="gamma-table"):
    """gamma(y) = E[w sum_{i<=L} r(X^y_{i-1}) B_i^2], L = floor(1/w), on a uniform torus grid.

    The masses entering the sum are independent of the positions at which r is
    evaluated, so gamma(y) = E B^2 * E[w sum r(X^y_{i-1})]; the expectation is
    estimated with ``samples`` paths per grid point.
    """
    L = int(math.floor(1.0 / w))
    th = theta(w)
    ys = np.arange(grid) / grid
    stream = RandomStream(seed, (experiment,))
    out = np.empty(grid)
    for j, y in enumerate(ys):
        bt = np.ascontiguousarray(mass_block(dist, stream, j, L, samples))
        sums = _round_r_sum(y, w, th, bt, L)
        out[j] = dist.moment2() * float(np.mean(sums))
    return ys, out


def _round_r_sum(y, w, th, bt, L):
    """w sum r(X^y_{i-1}) over one round, paths driven by ``bt``; B^2 factor left out."""
    S = bt.shape[1]
    pos = np.empty((L, S))
    x = np.full(S, y)
    for i in range(L):
        pos[i] = x
        x = x + th + phi_map(x, bt[i], w)
    c2 = np.cos(2.0 * np.pi * pos)
    r = 0.25 * np.pi ** 2 * (c2 * c2 - c2)
    return w * r.sum(axis=0)


def block_martingale(w, blocks, samples, dist, seed=0, x0=0.3, table=None, block_size=4096,
                     experiment="z-martingale"):
    """sum_k Z_k with Z_k = (block r-sum) - gamma(X at block start), block length floor(1/w).

    |Z_k| <= (9 pi^2 / 16) w L b_max^2 =: m, and Var(Z_k | past) <= m^2 / 4.
    """
    L = int(math.floor(1.0 / w))
    th = theta(w)
    ys, gam = table if table is not None else gamma_table(w, dist, seed)
    stream = RandomStream(seed, (experiment,))
    vals = []
    mx = 0.0
    n = L * blocks
    yp = np.concatenate([ys, [1.0]])
    gp = np.concatenate([gam, gam[:1]])
    for k, _, size in block_layout(samples, block_size):
        bt = np.ascontiguousarray(mass_block(dist, stream, k, n, size))
        sums, starts = K.r_block_sums(_starts(x0, size, stream.child(k)), float(w), th, bt, L)
        z = sums - np.interp(np.mod(starts, 1.0), yp, gp)
        mx = max(mx, float(np.max(np.abs(z))))
        vals.append(z.sum(axis=1))
    m_bound = 9.0 * math.pi ** 2 / 16.0 * w * L * dist.b_max ** 2
    return MartingaleSample(np.concatenate(vals), m_bound, blocks * m_bound ** 2 / 4.0, blocks, mx)


def gamma_tail_experiment(w_grid, n_grid, samples, dist, seed=0, x0=None, block_size=4096,
                          experiment="gamma-tail"):
    """Rows (w, n, E[1/Gamma_n], stderr, alpha) with alpha = -log E[1/Gamma_n] / (w^2 n).

    Uses the exact product amplitude; x0 defaults to theta (the e1 direction).
    Each (w, n) cell has its own stream.
    """
    rows = []
    for w in w_grid:
        th = theta(w)
        start = th if x0 is None else float(x0)
        for n in n_grid:
            n = int(n)
            stream = RandomStream(seed, (experiment, int(round(w * 1e6)), n))
            vals = []
            for k, _, size in block_layout(samples, block_size):
                bt = np.ascontiguousarray(mass_block(dist, stream, k, n, size))
                _, lg, _, _, st = K.chain_batch(np.full(size, start), float(w), th, bt, False)
                if st.any():
                    raise ArithmeticError("degenerate amplitude")
                vals.append(np.exp(-lg))
            mean, se = summarize(np.concatenate(vals))
            alpha = -math.log(mean) / (w * w * n)
            rows.append(dict(w=float(w), n=n, w2n=w * w * n, inv_gamma=mean, stderr=se, alpha=alpha))
    return rows


def ergodic_average_error(w, samples, dist, seed=0, x0=None, block_size=1 << 14, experiment="ergodic"):
    """Mean and stderr of |w sum_{j<=L} cos(2 pi X_j)| over one round L = floor(1/w).

    The integral of cos over the torus is 0.  Starts are uniform unless x0 is given.
    """
    L = int(math.floor(1.0 / w))
    th = theta(w)
    stream = RandomStream(seed, (experiment, int(round(w * 1e6))))
    vals = []
    for k, _, size in block_layout(samples, block_size):
        bt = np.ascontiguousarray(mass_block(dist, stream, k, L, size))
        vals.append(np.abs(K.chain_cos_average(_starts(x0, size, stream.child(k)), float(w), th, bt)))
    return summarize(np.concatenate(vals))


def ergodic_rate(w_grid, samples, dist, seed=0, x0=None):
    """Rows (w, mean error, stderr) and the least-squares slope of log error on log w."""
    rows = []
    for w in w_grid:
        mean, se = ergodic_average_error(w, samples, dist, seed, x0)
        rows.append(dict(w=float(w), error=mean, stderr=se))
    lw = np.log([r["w"] for r in rows])
    le = np.log([r["error"] for r in rows])
    slope = float(np.polyfit(lw, le, 1)[0]) if len(rows) > 1 else math.nan
    return rows, slope
