"""Transfer matrices A_k(w), scaled products Q_n and the scalar recursion D_n(v)."""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

__all__ = [
    "OverflowGuard",
    "transfer_matrix",
    "ScaledMatrixProduct",
    "step_product",
    "DPairState",
    "d_recursion",
    "d_direct",
    "d_recursion_mp",
    "wronskian",
    "wronskian_mp",
    "wronskian_condition",
]

DEFAULT_GUARD = 600.0


class OverflowGuard(ArithmeticError):
    """log-scale of a product passed its guard; usually a frequency grid reaching too far."""


def transfer_matrix(w, b):
    """A(w, b) = [[2 - pi^2 w^2 (1 + b), -1], [1, 0]]."""
    if w < 0:
        raise ValueError("frequency must be non-negative")
    return np.array([[2.0 - math.pi ** 2 * w * w * (1.0 + b), -1.0], [1.0, 0.0]])


@dataclass
class ScaledMatrixProduct:
    """True product = exp(log_scale) * m."""

    m: np.ndarray
    log_scale: float = 0.0
    steps: int = 0
    guard: float = DEFAULT_GUARD

    @classmethod
    def identity(cls, guard=DEFAULT_GUARD):
        return cls(np.eye(2), 0.0, 0, guard)

    def value(self):
        return math.exp(self.log_scale) * self.m

    def log_norm(self):
        return self.log_scale + math.log(np.linalg.norm(self.m))

    def det(self):
        """det of the true product, from the scaled factor."""
        return float(np.linalg.det(self.m)) * math.exp(2.0 * self.log_scale)


def step_product(state, A):
    """Left-multiply by A and renormalize; mutates and returns ``state``."""
    A = np.asarray(A, dtype=float)
    if A[0, 1] == -1.0 and A[1, 0] == 1.0 and A[1, 1] == 0.0:
        state.log_scale = K.product_step(state.m, state.log_scale, float(A[0, 0]))
    else:
        m = A @ state.m
        f = np.linalg.norm(m)
        if f > 2.0 or f < 0.5:
            m /= f
            state.log_scale += math.log(f)
        state.m = m
    state.steps += 1
    if state.guard is not None and state.log_scale > state.guard:
        raise OverflowGuard(
            f"log-scale {state.log_scale:.1f} exceeded guard {state.guard} after {state.steps} steps")
    return state


@dataclass(frozen=True)
class DPairState:
    """(D_n, D_{n-1}) = 2**exp2 * (d_cur, d_prev)."""

    d_cur: float
    d_prev: float
    exp2: int
    n: int

    @property
    def log_scale(self):
        return self.exp2 * math.log(2.0)

    def value(self):
        return math.ldexp(self.d_cur, self.exp2), math.ldexp(self.d_prev, self.exp2)

    def log_abs(self):
        return math.log(abs(self.d_cur)) + self.log_scale


def d_recursion(v0, v_minus1, w, b_seq):
    """Run D_n = (2 - pi^2 w^2 (1 + B_n)) D_{n-1} - D_{n-2} from (D_0, D_{-1}) = (v0, v_minus1)."""
    if v0 == 0 and v_minus1 == 0:
        raise ValueError("initial vector must be non-zero")
    b = np.ascontiguousarray(b_seq, dtype=float)
    d, dp, ex = K.d_rec(float(v0), float(v_minus1), float(w), b)
    return DPairState(float(d), float(dp), int(ex), int(b.size))


def d_direct(v0, v_minus1, w, b_seq):
    """Plain recursion D_0..D_n without rescaling (reference for short chains)."""
    b = np.ascontiguousarray(b_seq, dtype=float)
    return K.d_rec_trace(float(v0), float(v_minus1), float(w), b)


def wronskian(e1_state, e2_state):
    """D_n(e1) D_{n-1}(e2) - D_{n-1}(e1) D_n(e2), combined in scaled form."""
    c = e1_state.d_cur * e2_state.d_prev - e1_state.d_prev * e2_state.d_cur
    return math.ldexp(c, e1_state.exp2 + e2_state.exp2)


def d_recursion_mp(v0, v_minus1, w, b_seq, dps=50):
    """(D_n, D_{n-1}) in mpmath arithmetic with ``dps`` digits.

    Double precision cannot resolve the unit Wronskian once |D_n|^2 eps is not
    small; this path is the reference for those long, strongly localized chains.
    The masses are taken as the exact binary values of ``b_seq``.
    """
    import mpmath

    with mpmath.workdps(dps):
        e = mpmath.pi ** 2 * mpmath.mpf(float(w)) ** 2
        d = mpmath.mpf(float(v0))
        dp = mpmath.mpf(float(v_minus1))
        for b in np.asarray(b_seq, dtype=float):
            d, dp = (2 - e * (1 + mpmath.mpf(b))) * d - dp, d
        return +d, +dp


def wronskian_mp(w, b_seq, dps=None):
    """Wronskian of the e1 and e2 solutions in extended precision, as a float.

    With ``dps=None`` the working precision is chosen from a double-precision
    pass so that roughly 20 significant digits survive the cancellation.
    """
    import mpmath

    if dps is None:
        c = wronskian_condition(w, b_seq)
        if not math.isfinite(c):
            # each step grows the pair by at most 3 + pi^2 w^2 (1 + |b|)
            c = 2.0 * len(b_seq) * math.log(3.0 + math.pi ** 2 * w * w * (1.0 + float(np.max(np.abs(b_seq)))))
        dps = 30 + int(math.ceil(c / math.log(10.0)))
    a1, a0 = d_recursion_mp(1.0, 0.0, w, b_seq, dps)
    c1, c0 = d_recursion_mp(0.0, 1.0, w, b_seq, dps)
    with mpmath.workdps(dps):
        return float(a1 * c0 - a0 * c1)


def wronskian_condition(w, b_seq):
    """log of the largest product |D_k(e1)| |D_k(e2)| along the chain (natural-log units).

    Rounding error of the double-precision Wronskian is about eps times exp
    of this value; the running maximum matters, not just the final pair.
    Returns inf when the unscaled recursion overflows.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        a = np.abs(d_direct(1.0, 0.0, w, b_seq))
        c = np.abs(d_direct(0.0, 1.0, w, b_seq))
        p = float(np.max(a) * np.max(c))
    if not math.isfinite(p):
        return math.inf
    return max(0.0, math.log(max(p, 1e-300)))
