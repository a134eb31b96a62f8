"""Fourier-diagonal approximation of the chain's transition operator and density checks.

Freezing the kick at a point y_k, one step of the chain acts on Fourier modes
by the symbol lambda_k(z); n steps along y_j = y - j w multiply to Lambda_n(xi),
and S_{y,n} u(x) = sum_xi exp(i 2 pi xi (x + n w - y)) Lambda_n(xi) u_hat(xi).
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .circlemap import phi_map, shape_functions, theta
from .current import block_layout, mass_block
from .rng import RandomStream

__all__ = [
    "CutoffTooSmall",
    "FourierMultiplier",
    "b_quadrature",
    "lambda_k",
    "big_lambda",
    "bump_hat",
    "s_yn_apply",
    "sup_kernel_ratio",
    "DensityResult",
    "empirical_density_check",
    "density_histogram",
]


class CutoffTooSmall(ValueError):
    pass


def b_quadrature(dist, nodes=64):
    """Gauss-Legendre nodes in b and weights already multiplied by tau."""
    t, wt = np.polynomial.legendre.leggauss(nodes)
    lo, hi = dist.b_minus, dist.b_plus
    b = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    return b, 0.5 * (hi - lo) * wt * dist.pdf(b)


def lambda_k(z, y_k, w, dist, h=0.0, nodes=64):
    """lambda_k(z) = int exp(i 2 pi z (theta - w + Phi(y_k, b)) / w) (1 + w h b) tau(b) db.

    ``z`` and ``y_k`` broadcast; ``h`` is the value h(y_k) of the tilt.
    """
    b, wb = b_quadrature(dist, nodes)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y_k, dtype=float)
    ph = phi_map(y[..., None], b, w)
    shift = (theta(w) - w + ph) / w
    tilt = (1.0 + w * np.asarray(h, dtype=float)[..., None] * b) * wb
    out = np.sum(np.exp(2j * np.pi * z[..., None] * shift) * tilt, axis=-1)
    return out[()] if out.ndim == 0 else out


@dataclass
class FourierMultiplier:
    """Coefficients on integer frequencies -cutoff..cutoff."""

    coefficients: np.ndarray
    cutoff: int
    log_modulus: np.ndarray = None
    phase: np.ndarray = None

    @property
    def xi(self):
        return np.arange(-self.cutoff, self.cutoff + 1)

    def __getitem__(self, xi):
        return self.coefficients[np.asarray(xi) + self.cutoff]


def big_lambda(xi, y, n, w, dist, h=0.0, nodes=64):
    """Lambda_n(xi) = prod_{j=1..n} lambda_j(xi w), y_j = y - j w.

    Accumulated as log-modulus plus unwrapped phase; returns the complex value
    together with (log|Lambda|, phase) arrays.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    logmod = np.zeros(xi.shape)
    phase = np.zeros(xi.shape)
    b, wb = b_quadrature(dist, nodes)
    th = theta(w)
    for j in range(1, n + 1):
        yj = y - j * w
        shift = (th - w + phi_map(yj, b, w)) / w
        hj = h(yj) if callable(h) else h
        lam = np.exp(2j * np.pi * (xi * w)[:, None] * shift[None, :]) @ ((1.0 + w * hj * b) * wb)
        logmod += np.log(np.abs(lam))
        phase += np.angle(lam)
    return np.exp(logmod + 1j * phase), logmod, phase


def bump_hat(xi, y, width):
    """Fourier coefficients of the raised-cosine bump of total width ``width`` centred at y.

    u(x) = (1 + cos(2 pi (x - y) / width)) / width on |x - y| < width / 2, so ||u||_1 = 1.
    """
    xi = np.asarray(xi, dtype=float)
    a = xi * width
    with np.errstate(divide="ignore", invalid="ignore"):
        core = np.where(np.abs(np.abs(a) - 1.0) < 1e-12, 0.5, np.sinc(a) / (1.0 - a * a))
    return core * np.exp(-2j * np.pi * xi * y)


def s_yn_apply(u_hat, y, n, w, dist, grid=512, tol=1e-12, h=0.0):
    """S_{y,n} u sampled at x = k / grid.

    ``u_hat`` is a FourierMultiplier of the input.  n = 0 is the identity.
    Raises CutoffTooSmall when the dropped edge term is not below ``tol``
    relative to the partial sum.
    """
    xi = u_hat.xi
    if n > 0:
        lam, logmod, _ = big_lambda(xi, y, n, w, dist, h)
    else:
        lam = np.ones(xi.shape, dtype=complex)
        logmod = np.zeros(xi.shape)
    coef = lam * u_hat.coefficients
    x = np.arange(grid) / grid
    vals = np.real(np.exp(2j * np.pi * np.outer(x + n * w - y, xi)) @ coef)
    edge = np.exp(logmod[[0, -1]]).max() * np.abs(u_hat.coefficients).max()
    scale = max(np.abs(vals).max(), 1e-300)
    if n > 0 and edge > tol * scale:
        need = int(math.ceil(u_hat.cutoff * math.sqrt(max(1.0, math.log(edge / (tol * scale)) + 1.0))))
        raise CutoffTooSmall(f"cutoff {u_hat.cutoff} leaves {edge:.2e}; try about {need}")
    return x, vals


def bump_multiplier(y, width, cutoff):
    xi = np.arange(-cutoff, cutoff + 1)
    return FourierMultiplier(bump_hat(xi, y, width), cutoff)


def sup_kernel_ratio(y, n, w, dist, width=None, cutoff=None, grid=1024):
    """sup_x S_{y,n} u * w sqrt(n) / ||u||_1 for the bump of width w^2 (||u||_1 = 1)."""
    width = w * w if width is None else width
    if cutoff is None:
        # |Lambda_n(xi)| ~ exp(-c n w^2 xi^2) with c near pi^2 E B^2 / 4 for small xi w
        cutoff = int(math.ceil(min(12.0 / width, 9.0 / (w * math.sqrt(n * 0.05)))))
    u = bump_multiplier(y, width, cutoff)
    _, vals = s_yn_apply(u, y, n, w, dist, grid=grid, tol=1e-9)
    return float(vals.max() * w * math.sqrt(n))


# ---------------------------------------------------------------------------
# Monte Carlo densities of X_n


@dataclass
class DensityResult:
    sup_density: float
    inf_density: float
    edges: np.ndarray
    density: np.ndarray
    samples: int
    bin_width: float


def density_histogram(positions, bins):
    """Histogram density on the torus with equal bins."""
    frac = np.mod(positions, 1.0)
    counts = np.bincount(np.minimum((frac * bins).astype(np.int64), bins - 1), minlength=bins)
    return counts


def empirical_density_check(x0, w, n, samples, dist, seed=0, bins=None, block_size=1 << 16,
                            experiment="density"):
    """Histogram density of X_n^{x0}; bins of width max(w^2, 1/sqrt(samples)) rounded to divide 1."""
    if bins is None:
        width = max(w * w, 1.0 / math.sqrt(samples))
        bins = max(1, int(math.floor(1.0 / width)))
    th = theta(w)
    stream = RandomStream(seed, (experiment, int(round(w * 1e6)), n))
    counts = np.zeros(bins, dtype=np.int64)
    for k, _, size in block_layout(samples, block_size):
        bt = np.ascontiguousarray(mass_block(dist, stream, k, n, size))
        counts += density_histogram(K.chain_positions(np.full(size, float(x0)), float(w), th, bt), bins)
    dens = counts * bins / samples
    return DensityResult(float(dens.max()), float(dens.min()), np.arange(bins + 1) / bins, dens, samples,
                         1.0 / bins)
