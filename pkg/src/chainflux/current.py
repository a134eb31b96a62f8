"""Heat-current density j_n(w), the frequency integral J_n and its disorder average."""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .circlemap import g_inv, theta
from .rng import RandomStream
from .transfer import d_recursion

__all__ = [
    "BathFamily",
    "FrequencyGrid",
    "CurrentEstimate",
    "TailNotConverged",
    "current_density",
    "current_density_samples",
    "integrate_current",
    "integrate_current_adaptive",
    "mass_block",
    "block_layout",
    "per_sample_currents",
    "mc_expected_current",
    "fit_scaling",
    "LyapunovEstimate",
    "lyapunov_estimate",
    "rubin_greer_sandwich",
    "rubin_greer_batch",
    "rg_decay_experiment",
    "rg_integral",
]


class TailNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class BathFamily:
    """Coupling of the end sites.

    ``cl``: c(w) = w (dimensionless Casher-Lebowitz, same as ``dhar`` with s = 1).
    ``dhar``: c(w) = w**s.
    ``cl-physical``: c_k = pi w lam m_k, the Langevin bath of friction lam in
    units where E[m] = 1 and omega = pi w.
    """

    kind: str = "cl"
    s: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cl", "dhar", "cl-physical"):
            raise ValueError(f"unknown bath {self.kind!r}")
        if self.kind == "cl" and self.s != 1.0:
            raise ValueError("the cl bath has s = 1; use kind='dhar' for other exponents")

    def couplings(self, nodes, b_first, b_last):
        """(cw per node, factor at site 1, factor at site n) for a batch of samples."""
        nodes = np.asarray(nodes, dtype=float)
        b_first = np.atleast_1d(np.asarray(b_first, dtype=float))
        b_last = np.atleast_1d(np.asarray(b_last, dtype=float))
        if self.kind == "cl-physical":
            return math.pi * self.lam * nodes, 1.0 + b_first, 1.0 + b_last
        ones = np.ones(b_first.shape)
        return nodes ** self.s, ones, ones.copy()

    def power_law(self):
        """(scale, exponent) with c(w) = scale * w**exponent before the per-site factors."""
        if self.kind == "cl-physical":
            return math.pi * self.lam, 1.0
        return 1.0, float(self.s)

    def prefactor(self):
        """Factor turning int_0^inf j dw into the physical current per unit (T1 - Tn)."""
        return 2.0 if self.kind == "cl-physical" else 1.0


CL = BathFamily()


@dataclass
class FrequencyGrid:
    """Composite Gauss-Legendre panels around an optional resonance-resolved core.

    On ``core = (a, b)`` the nodes depend on the masses: every zero of
    D_n(e1) in (a, b) (a transmission resonance) gets its own cell, mapped so
    that the Lorentzian peak becomes smooth, with ``peak_nodes`` nodes per
    piece (see ``_kernels.current_resonance_integrals``).  The panels cover
    the rest of [w_lo, w_hi] and must leave exactly the core open.
    """

    panels: list
    nodes_per_panel: int = 32
    w_max: float = 4.0
    meta: dict = field(default_factory=dict)
    core: tuple = None
    peak_nodes: int = 16
    kappa: float = 4.0

    def __post_init__(self):
        edges = sorted((float(a), float(b)) for a, b in self.panels)
        if self.core is not None:
            self.core = (float(self.core[0]), float(self.core[1]))
            if not self.core[1] > self.core[0]:
                raise ValueError("core needs b > a")
        pieces = sorted(edges + ([self.core] if self.core else []))
        if not pieces or pieces[0][0] <= 0.0:
            raise ValueError("first panel must start above zero")
        for (a, b), (c, _) in zip(pieces, pieces[1:] + [(pieces[-1][1], None)]):
            if not b > a or c != b:
                raise ValueError("panels must be ascending and contiguous")
        if self.nodes_per_panel < 1 or self.peak_nodes < 1:
            raise ValueError("node counts must be positive")
        self.panels = edges

    @classmethod
    def for_chain(cls, n, u_max=12.0, w_max=4.0, nodes_per_panel=32, peak_nodes=16, w_min_factor=1e-4,
                  low_ratio=4.0, high_ratio=2.0):
        """Default grid for a chain of length n.

        Geometric panels from w_min = w_min_factor / sqrt(n) up to 0.5 / n
        (below the lowest resonance), the resolved core up to u_max / sqrt(n),
        then geometric panels to w_max.  Past u ~ 12 the disorder-averaged
        density is below 1e-9 of its peak.
        """
        n = int(n)
        w_min = w_min_factor / math.sqrt(n)
        w_a = max(0.5 / n, w_min * low_ratio)
        w_b = min(u_max / math.sqrt(n), w_max)
        edges = [w_min]
        while edges[-1] * low_ratio < w_a:
            edges.append(edges[-1] * low_ratio)
        edges.append(w_a)
        low = list(zip(edges[:-1], edges[1:]))
        edges = [w_b]
        while edges[-1] < w_max:
            edges.append(min(edges[-1] * high_ratio, w_max))
        high = list(zip(edges[:-1], edges[1:]))
        meta = dict(n=n, u_max=u_max, w_min=w_min, w_max=w_max, nodes_per_panel=nodes_per_panel,
                    peak_nodes=peak_nodes)
        return cls(low + high, nodes_per_panel, w_max, meta, (w_a, w_b), peak_nodes)

    def nodes_weights(self):
        """Gauss-Legendre nodes and weights of the fixed panels (the core is per sample)."""
        t, wt = np.polynomial.legendre.leggauss(self.nodes_per_panel)
        if not self.panels:
            return np.empty(0), np.empty(0)
        a = np.array([p[0] for p in self.panels])
        b = np.array([p[1] for p in self.panels])
        h = 0.5 * (b - a)
        nodes = (a[:, None] + h[:, None] * (t[None, :] + 1.0)).ravel()
        weights = (h[:, None] * wt[None, :]).ravel()
        return nodes, weights

    def refined(self):
        """Every panel split in two and twice the nodes per resonance piece."""
        out = []
        for a, b in self.panels:
            mid = 0.5 * (a + b)
            out += [(a, mid), (mid, b)]
        return FrequencyGrid(out, self.nodes_per_panel, self.w_max, dict(self.meta, refined=True), self.core,
                             2 * self.peak_nodes, self.kappa)

    @property
    def bounds(self):
        lo = [p[0] for p in self.panels] + ([self.core[0]] if self.core else [])
        hi = [p[1] for p in self.panels] + ([self.core[1]] if self.core else [])
        return min(lo), max(hi)

    @property
    def size(self):
        """Fixed Gauss-Legendre nodes; the core adds 4 * peak_nodes per resonance."""
        return len(self.panels) * self.nodes_per_panel

    def describe(self):
        lo, hi = self.bounds
        d = dict(self.meta, panels=len(self.panels), nodes=self.size, w_lo=lo, w_hi=hi)
        if self.core:
            d.update(core_lo=self.core[0], core_hi=self.core[1], peak_nodes=self.peak_nodes)
        return d


@dataclass
class CurrentEstimate:
    n: int
    mean: float
    stderr: float
    samples: int
    grid: dict
    seed: int
    wall: float = 0.0
    values: np.ndarray = None

    def row(self):
        return dict(n=self.n, mean=self.mean, stderr=self.stderr, samples=self.samples)


# ---------------------------------------------------------------------------
# density and integral


def current_density(n, w, b_seq, bath=CL):
    """j_n(w) for one mass sequence, from the scaled recursion."""
    b = np.asarray(b_seq, dtype=float)[:n]
    if n < 1 or b.size < n:
        raise ValueError("need n >= 1 masses")
    if w <= 0:
        raise ValueError("frequency must be positive")
    e1 = d_recursion(1.0, 0.0, w, b)
    e2 = d_recursion(0.0, 1.0, w, b)
    cw, f1, fn = bath.couplings([w], b[:1], b[n - 1:n])
    c1 = float(cw[0] * f1[0])
    cn = float(cw[0] * fn[0])
    a1 = e1.d_cur ** 2 + cn * cn * e1.d_prev ** 2
    a2 = c1 * c1 * (e2.d_cur ** 2 + cn * cn * e2.d_prev ** 2)
    den = _ldexp_inf(a1, 2 * e1.exp2) + _ldexp_inf(a2, 2 * e2.exp2)
    return c1 * cn / (den + 2.0 * c1 * cn)


def _ldexp_inf(x, e):
    try:
        return math.ldexp(x, e)
    except OverflowError:
        return math.inf


def current_density_samples(bt, nodes, bath=CL):
    """j_n at all (sample, node) pairs; ``bt`` is site-major (n, samples)."""
    bt = np.ascontiguousarray(bt, dtype=float)
    nodes = np.ascontiguousarray(nodes, dtype=float)
    cw, f1, fn = bath.couplings(nodes, bt[0], bt[-1])
    return K.current_density_batch(bt, nodes, np.ascontiguousarray(cw), f1, fn)


def _tail(bt, grid, total, bath, tail_tol, max_tail_panels):
    """Panels appended past w_max until the last one is negligible."""
    t, wt = np.polynomial.legendre.leggauss(grid.nodes_per_panel)
    top = max(grid.panels, key=lambda p: p[1]) if grid.panels else grid.core
    lo = grid.bounds[1]
    width = top[1] - top[0]
    extra = np.zeros(bt.shape[1])
    for _ in range(max_tail_panels):
        hi = lo + width
        nodes = lo + 0.5 * width * (t + 1.0)
        part = current_density_samples(bt, nodes, bath) @ (0.5 * width * wt)
        extra += part
        if np.all(np.abs(part) <= tail_tol * np.abs(total + extra)):
            return extra
        lo, width = hi, 2.0 * width
    raise TailNotConverged(f"frequency tail not below {tail_tol} after the cap of {max_tail_panels} panels")


def _core_part(bt, grid, bath):
    if grid.core is None:
        return np.zeros(bt.shape[1])
    c_scale, c_pow = bath.power_law()
    _, f1, fn = bath.couplings([1.0], bt[0], bt[-1])
    t, wt = np.polynomial.legendre.leggauss(grid.peak_nodes)
    f1 = np.ascontiguousarray(np.broadcast_to(f1, bt.shape[1]), dtype=float)
    fn = np.ascontiguousarray(np.broadcast_to(fn, bt.shape[1]), dtype=float)
    out, _ = K.current_resonance_integrals(bt, grid.core[0], grid.core[1], t, wt, c_scale, c_pow, f1, fn,
                                           grid.kappa)
    return out


def integrate_current(n, b_seq, grid=None, bath=CL, tail_tol=1e-6, max_tail_panels=24):
    """J_n = int j_n(w) dw on ``grid`` (default grid for n) plus the adaptive tail.

    ``b_seq`` may be one sequence (n,) or a site-major batch (n, samples).
    """
    b = np.asarray(b_seq, dtype=float)
    single = b.ndim == 1
    bt = np.ascontiguousarray((b[:, None] if single else b)[:n])
    if bt.shape[0] < n:
        raise ValueError("not enough masses for the chain length")
    grid = grid or FrequencyGrid.for_chain(n)
    nodes, weights = grid.nodes_weights()
    total = current_density_samples(bt, nodes, bath) @ weights if nodes.size else np.zeros(bt.shape[1])
    total = total + _core_part(bt, grid, bath)
    total = total + _tail(bt, grid, total, bath, tail_tol, max_tail_panels)
    total = bath.prefactor() * total
    return float(total[0]) if single else total


def integrate_current_adaptive(n, b_seq, rtol=1e-7, grid=None, bath=CL, max_levels=6):
    """J_n refined (panels halved, peak nodes doubled) until two levels agree to rtol."""
    grid = grid or FrequencyGrid.for_chain(n)
    prev = integrate_current(n, b_seq, grid, bath, tail_tol=min(1e-6, rtol))
    for _ in range(max_levels):
        grid = grid.refined()
        cur = integrate_current(n, b_seq, grid, bath, tail_tol=min(1e-6, rtol))
        if np.all(np.abs(np.asarray(cur) - prev) <= rtol * np.abs(cur)):
            return cur
        prev = cur
    return cur


# ---------------------------------------------------------------------------
# Monte Carlo over masses


def block_layout(samples, block_size):
    """[(block index, first sample, size)] covering ``samples``."""
    out = []
    for k, s0 in enumerate(range(0, samples, block_size)):
        out.append((k, s0, min(block_size, samples - s0)))
    return out


def mass_block(dist, stream, block, n, size):
    """Site-major masses (n, size) of one sample block.

    Rows are drawn site by site, so the first n rows are identical for every
    chain length drawn from the same block: common random numbers across n.
    """
    if dist is None:
        return np.zeros((n, size))
    return dist.ppf(stream.child(block).uniform((n, size)))


def per_sample_currents(n, samples, dist, grid=None, seed=0, bath=CL, block_size=32, threads=1,
                        experiment="scaling", blocks=None, progress=None):
    """J_n per sample, computed block by block and concatenated in block order.

    ``blocks`` restricts the work to a subset of block indices (for
    checkpointed runs); the result is then a dict {block: values}.
    """
    stream = RandomStream(seed, (experiment,))
    grid = grid or FrequencyGrid.for_chain(n)
    layout = block_layout(samples, block_size)
    todo = layout if blocks is None else [c for c in layout if c[0] in set(blocks)]

    def work(cell):
        k, _, size = cell
        bt = mass_block(dist, stream, k, n, size)
        return k, integrate_current(n, bt, grid, bath)

    results = {}
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            for k, v in ex.map(work, todo):
                results[k] = v
                if progress:
                    progress(k, v)
    else:
        for cell in todo:
            k, v = work(cell)
            results[k] = v
            if progress:
                progress(k, v)
    if blocks is not None:
        return results
    return np.concatenate([results[k] for k, _, _ in layout])


def summarize(values):
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
    return mean, stderr


def mc_expected_current(n, samples, dist, grid=None, seed=0, bath=CL, block_size=32, threads=1,
                        delta_t=1.0, experiment="scaling"):
    """Monte Carlo E[J_n] times (T1 - Tn) = delta_t."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    t0 = time.perf_counter()
    grid = grid or FrequencyGrid.for_chain(n)
    vals = delta_t * per_sample_currents(n, samples, dist, grid, seed, bath, block_size, threads,
                                         experiment)
    mean, se = summarize(vals)
    return CurrentEstimate(n, mean, abs(delta_t) * se if samples > 1 else math.nan, samples,
                           grid.describe(), seed, time.perf_counter() - t0, vals)


def fit_scaling(points):
    """Weighted least squares of log(mean) on log(n); returns (slope, slope_stderr).

    Weights are 1 / (stderr / mean)^2.  With no usable stderr the fit is
    unweighted and the slope error comes from the residuals.
    """
    pts = [(float(n), float(m), float(s)) for n, m, s in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(m <= 0 for _, m, _ in pts):
        raise ValueError("means must be positive for a log-log fit")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    rel = np.array([p[2] / p[1] for p in pts])
    X = np.column_stack([np.ones_like(x), x])
    if np.all(np.isfinite(rel)) and np.all(rel > 0):
        wts = 1.0 / rel ** 2
        A = X.T @ (wts[:, None] * X)
        coef = np.linalg.solve(A, X.T @ (wts * y))
        cov = np.linalg.inv(A)
        return float(coef[1]), float(math.sqrt(cov[1, 1]))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = len(pts) - 2
    if dof <= 0:
        return float(coef[1]), math.nan
    res = y - X @ coef
    s2 = float(res @ res) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(math.sqrt(cov[1, 1]))


# ---------------------------------------------------------------------------
# Lyapunov exponent


@dataclass
class LyapunovEstimate:
    w: float
    n: int
    burn_in: int
    gamma: float
    stderr: float
    samples: int
    target: float

    @property
    def ratio(self):
        return self.gamma / self.target if self.target > 0 else math.nan


def lyapunov_estimate(w, n, samples, dist, seed=0, burn_in=None, block_size=64, experiment="lyapunov"):
    """gamma(w) from the growth of log ||Q_n|| between ``burn_in`` and n.

    The increment form removes the start-up offset of log ||Q_n|| (of order
    log(1/w)); burn_in defaults to n // 4.
    """
    if w * w * n < 8 - 1e-9:
        raise ValueError("need w^2 n >= 8")
    burn_in = n // 4 if burn_in is None else int(burn_in)
    if not 0 <= burn_in < n:
        raise ValueError("burn_in must lie in [0, n)")
    stream = RandomStream(seed, (experiment,))
    vals = []
    for k, _, size in block_layout(samples, block_size):
        bt = np.ascontiguousarray(mass_block(dist, stream, k, n, size))
        ln, l0 = K.lyapunov_batch(bt, float(w), burn_in)
        vals.append((ln - l0) / (n - burn_in))
    vals = np.concatenate(vals)
    mean, se = summarize(vals)
    target = math.pi ** 2 * (dist.moment2() if dist is not None else 0.0) * w * w / 8.0
    return LyapunovEstimate(w, n, burn_in, mean, se, samples, target)


# ---------------------------------------------------------------------------
# Rubin-Greer sandwich


def rg_starts(w):
    """Chain starting points for the (e1 + e2)/sqrt2 and (e1 - e2)/sqrt2 directions."""
    return g_inv(1.0, w), g_inv(-1.0, w)


def rubin_greer_batch(n, w, bt):
    """(lower, proxy, upper) per sample column of the site-major masses ``bt``."""
    bt = np.ascontiguousarray(np.asarray(bt, dtype=float)[:n])
    th = theta(w)
    x1, x2 = rg_starts(w)
    S = bt.shape[1]
    _, lg1, _, _, st1 = K.chain_batch(np.full(S, x1), float(w), th, bt, False)
    _, lg2, _, _, st2 = K.chain_batch(np.full(S, x2), float(w), th, bt, False)
    if st1.any() or st2.any():
        raise ArithmeticError("degenerate amplitude in the sandwich chains")
    g1 = np.exp(np.minimum(2.0 * lg1, 700.0))
    g2 = np.exp(np.minimum(2.0 * lg2, 700.0))
    lower = 1.0 / (1.0 + g1 + g2)
    upper = 1.0 / (1.0 + g2)
    return lower, np.sqrt(lower * upper), upper


def rubin_greer_sandwich(n, w, b_seq):
    lo, mid, up = rubin_greer_batch(n, w, np.asarray(b_seq, dtype=float)[:n, None])
    return float(lo[0]), float(mid[0]), float(up[0])


def rg_decay_experiment(w, w2n_grid, samples, dist, seed=0, block_size=256, experiment="rg-decay"):
    """E[upper] and E[lower] of the sandwich along w^2 n, with a log-linear decay-rate fit."""
    rows = []
    for c in w2n_grid:
        n = max(1, int(round(c / (w * w))))
        stream = RandomStream(seed, (experiment, int(round(w * 1e6)), n))
        lo_all, up_all = [], []
        for k, _, size in block_layout(samples, block_size):
            lo, _, up = rubin_greer_batch(n, w, mass_block(dist, stream, k, n, size))
            lo_all.append(lo)
            up_all.append(up)
        up_m, up_se = summarize(np.concatenate(up_all))
        lo_m, lo_se = summarize(np.concatenate(lo_all))
        rows.append(dict(w=float(w), n=n, w2n=w * w * n, upper=up_m, upper_stderr=up_se, lower=lo_m,
                         lower_stderr=lo_se))
    x = np.array([r["w2n"] for r in rows])
    y = np.log([r["upper"] for r in rows])
    rate = -float(np.polyfit(x, y, 1)[0]) if len(rows) > 1 else math.nan
    return rows, rate


def rg_integral(n, samples, dist, seed=0, w0=0.2, u_max=16.0, panels=4, nodes=8, block_size=128,
                experiment="rg-integral"):
    """int_0^{w0} E[upper] dw and the same for the lower bound.

    Gauss-Legendre panels uniform in u = w sqrt(n) on [0, u_max], plus one
    panel on [u_max / sqrt(n), w0] when that interval is non-empty.  The
    masses are shared across frequency nodes.
    """
    t, wt = np.polynomial.legendre.leggauss(nodes)
    w_cut = min(w0, u_max / math.sqrt(n))
    edges = np.linspace(0.0, w_cut, panels + 1).tolist()
    if w_cut < w0:
        edges.append(w0)
    ws, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ws.append(a + 0.5 * (b - a) * (t + 1.0))
        wts.append(0.5 * (b - a) * wt)
    ws = np.concatenate(ws)
    wts = np.concatenate(wts)
    stream = RandomStream(seed, (experiment, n))
    up_tot = np.zeros(samples)
    lo_tot = np.zeros(samples)
    for k, s0, size in block_layout(samples, block_size):
        bt = mass_block(dist, stream, k, n, size)
        for wk, ck in zip(ws, wts):
            lo, _, up = rubin_greer_batch(n, float(wk), bt)
            up_tot[s0:s0 + size] += ck * up
            lo_tot[s0:s0 + size] += ck * lo
    up_m, up_se = summarize(up_tot)
    lo_m, lo_se = summarize(lo_tot)
    return dict(n=int(n), upper=up_m, upper_stderr=up_se, lower=lo_m, lower_stderr=lo_se,
                nodes=int(ws.size))
