"""Circle-map representation of the recursion D_n.

The Moebius action of A(w, b) on ratios xi = D_n / D_{n-1} is conjugated by
``g`` to a torus map f_b(x) = x + theta + Phi(x, b).  Along the chain
X_l = f_{B_l}(X_{l-1}) one has, exactly,

    D_n(v) = v0 * Gamma_n * sin(pi X_n) / sin(pi X_0),   X_0 = g^{-1}(v0 / v_{-1}),

with Gamma_n the product of sin(pi X_{l-1}) / sin(pi (X_{l-1} + Phi(X_{l-1}, B_l)))
over l = 1..n and X_n taken on the lift.  To second order the log-amplitude is
w sum s(X_{l-1}) B_l + w^2 sum r(X_{l-1}) B_l^2.
"""
import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

__all__ = [
    "DegenerateAmplitude",
    "torus_distance",
    "theta",
    "g",
    "g_inv",
    "phi_map",
    "f_b",
    "f_b_inv",
    "flipped_s",
    "shape_functions",
    "step_residuals",
    "dphi",
    "PhaseAmplitudeState",
    "evolve_chain",
    "reconstruct_d",
    "JointState",
    "evolve_joint",
    "conditional_moments",
]

W0 = 0.2


class DegenerateAmplitude(ArithmeticError):
    """sin(pi X_l) hit zero exactly; the amplitude factor is undefined."""


def torus_distance(x, y=0.0):
    d = np.mod(np.asarray(x, dtype=float) - y, 1.0)
    return np.minimum(d, 1.0 - d)


def _check_w(w):
    if not (w > 0.0) or not (0.5 * math.pi * w < 1.0):
        raise ValueError(f"frequency {w!r} outside (0, 2/pi)")


def theta(w):
    """Average shift; arccos(1 - pi^2 w^2 / 2) / pi written without cancellation."""
    _check_w(w)
    return 2.0 / math.pi * math.asin(0.5 * math.pi * w)


def theta_lo(w):
    """theta(w) - float(theta(w)), from a 40-digit evaluation."""
    import mpmath

    _check_w(w)
    with mpmath.workdps(40):
        exact = 2 / mpmath.pi * mpmath.asin(mpmath.pi * mpmath.mpf(float(w)) / 2)
        return float(exact - mpmath.mpf(theta(w)))


def g(x, w):
    """sin(pi x) / sin(pi (x - theta)); returns inf at the pole x = theta."""
    th = theta(w)
    x = np.asarray(x, dtype=float)
    num = np.sin(np.pi * x)
    den = np.sin(np.pi * (x - th))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0.0, np.inf, num / np.where(den == 0.0, 1.0, den))
    return float(out) if out.ndim == 0 else out


def g_inv(xi, w):
    """Torus point x in [0, 1) with g(x) = xi; xi = +-inf maps to theta."""
    th = theta(w)
    xi = np.asarray(xi, dtype=float)
    inf = np.isinf(xi)
    xs = np.where(inf, 0.0, xi)
    ang = np.arctan2(math.sin(math.pi * th) * xs, math.cos(math.pi * th) * xs - 1.0)
    out = np.where(inf, th, np.mod(ang / math.pi, 1.0))
    out = np.where(out >= 1.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def phi_map(x, b, w):
    """Noise kick Phi(x, b), in cycles."""
    a = 0.5 * math.pi * w
    sq = math.sqrt(1.0 - a * a)
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    num = a * (1.0 - np.cos(2.0 * np.pi * x)) * b
    den = sq - a * np.sin(2.0 * np.pi * x) * b
    out = np.arctan(num / den) / np.pi
    return float(out) if out.ndim == 0 else out


def f_b(x, b, w, lift=False):
    y = np.asarray(x, dtype=float) + theta(w) + phi_map(x, b, w)
    out = y if lift else np.mod(y, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def f_b_inv(y, b, w, lift=False):
    th = theta(w)
    y = np.asarray(y, dtype=float)
    x = y - th + phi_map(y - th, -np.asarray(b, dtype=float), w)
    out = x if lift else np.mod(x, 1.0)
    return float(out) if np.ndim(out) == 0 else out


_S_SIGN = [1.0]


@contextmanager
def flipped_s():
    """Fault-injection hook: negate s(x) inside the block (harness sensitivity checks)."""
    _S_SIGN[0] = -_S_SIGN[0]
    try:
        yield
    finally:
        _S_SIGN[0] = -_S_SIGN[0]


def shape_functions(x):
    """(phi, psi, s, r) at x."""
    x = np.asarray(x, dtype=float)
    sx = np.sin(np.pi * x)
    cx = np.cos(np.pi * x)
    c2 = np.cos(2.0 * np.pi * x)
    phi = sx * sx
    psi = np.pi * sx ** 3 * cx
    s = -0.5 * _S_SIGN[0] * np.pi * np.sin(2.0 * np.pi * x)
    r = 0.25 * np.pi ** 2 * (c2 * c2 - c2)
    return phi, psi, s, r


def dphi(x):
    return np.pi * np.sin(2.0 * np.pi * np.asarray(x, dtype=float))


@dataclass
class PhaseAmplitudeState:
    x: float
    x_lifted: float
    log_gamma_exact: float
    log_gamma_s_sum: float
    log_gamma_r_sum: float
    n: int
    path: np.ndarray = None
    x_lo: float = 0.0

    @property
    def winding(self):
        return int(math.floor(self.x_lifted))

    @property
    def sin_lift(self):
        """sin(pi X_n) on the lift, from the distance of the fractional part to the nearest integer."""
        if self.x >= 0.5:
            s = math.sin(math.pi * ((1.0 - self.x) - self.x_lo))
        else:
            s = math.sin(math.pi * (self.x + self.x_lo))
        return (-1.0) ** (self.winding % 2) * s

    @property
    def log_gamma_exp_form(self):
        return self.log_gamma_s_sum + self.log_gamma_r_sum


def evolve_chain(x0, w, b_seq, n=None, trace=False, skip_first=False, x0_lo=0.0):
    """Run X from x0 on the masses ``b_seq`` (first n of them).

    ``skip_first`` replaces the first amplitude factor by its limit 1; this is
    only meaningful for x0 = 0 where that factor is 0/0.  ``x0_lo`` is a
    low-order correction to the start, as in x0 = theta.
    """
    th = theta(w)
    b = np.ascontiguousarray(b_seq, dtype=float)
    if n is not None:
        b = b[:n]
    x, lo, k, lg, ss, rs, status, path = K.chain_single(float(x0), float(x0_lo), float(w), th, theta_lo(w), b,
                                                        bool(skip_first), bool(trace))
    if status:
        raise DegenerateAmplitude(f"sin(pi X) = 0 at step {status - 1}")
    return PhaseAmplitudeState(float(x), float(x) + k, float(lg), float(ss), float(rs), int(b.size),
                               path if trace else None, float(lo))


def reconstruct_d(v0, v_minus1, w, b_seq, n=None):
    """D_n(v) from the phase-amplitude representation.

    For v0 != 0 the chain starts at g^{-1}(v0 / v_{-1}).  For v0 = 0 (the e2
    direction) the chain starts at 0 and D_n = -v_{-1} Gamma^0_n sin(pi X^0_n) / sin(pi theta).
    """
    b = np.ascontiguousarray(b_seq, dtype=float)
    if n is not None:
        b = b[:n]
    if v0 == 0:
        if v_minus1 == 0:
            raise ValueError("initial vector must be non-zero")
        st = evolve_chain(0.0, w, b, skip_first=True)
        return -v_minus1 * math.exp(st.log_gamma_exact) * st.sin_lift / math.sin(math.pi * theta(w))
    xi = math.inf if v_minus1 == 0 else v0 / v_minus1
    x0 = g_inv(xi, w)
    # the e1 start is theta itself; keep its low part
    st = evolve_chain(x0, w, b, x0_lo=theta_lo(w) if math.isinf(xi) else 0.0)
    return v0 * math.exp(st.log_gamma_exact) * st.sin_lift / math.sin(math.pi * x0)


def step_residuals(x0, w, b_seq):
    """Per-step remainder of the exponential form along one path, in units of w^3.

    Entry k is (log of the k-th amplitude factor - w s(X_{k-1}) B_k
    - w^2 r(X_{k-1}) B_k^2) / w^3, so the accumulated residual over n steps is
    at most n w^3 times the largest entry.
    """
    b = np.ascontiguousarray(b_seq, dtype=float)
    st = evolve_chain(x0, w, b, trace=True)
    x = np.mod(st.path[:-1], 1.0)
    p = phi_map(x, b, w)
    d = 2.0 * np.cos(np.pi * (x + 0.5 * p)) * np.sin(0.5 * np.pi * p)
    exact = -np.log1p(d / np.sin(np.pi * x))
    _, _, s, r = shape_functions(x)
    return (exact - w * s * b - w * w * r * b * b) / w ** 3


@dataclass
class JointState:
    x_theta: np.ndarray
    x_zero: np.ndarray
    m: np.ndarray
    log_ratio: np.ndarray
    n: int

    @property
    def lifted_difference(self):
        return self.x_theta - self.x_zero


def evolve_joint(w, b_seq, n=None):
    """X^theta and X^0 on the same masses; b_seq is (n,) or site-major (n, samples)."""
    th = theta(w)
    b = np.asarray(b_seq, dtype=float)
    single = b.ndim == 1
    bt = np.ascontiguousarray(b[:, None] if single else b)
    if n is not None:
        bt = bt[:n]
    xt, xz, m, lr = K.joint_batch(float(w), th, bt)
    if single:
        return JointState(xt[0], xz[0], m[0], lr[0], bt.shape[0])
    return JointState(xt, xz, m, lr, bt.shape[0])


def conditional_moments(x, w, dist, nodes=64):
    """E[dX - w | X = x] and E[(dX - w)^2 | X = x] by Gauss-Legendre in b."""
    t, wt = np.polynomial.legendre.leggauss(nodes)
    lo, hi = dist.b_minus, dist.b_plus
    b = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    wb = 0.5 * (hi - lo) * wt * dist.pdf(b)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dx = theta(w) + phi_map(x[:, None], b[None, :], w) - w
    return dx @ wb, (dx * dx) @ wb
