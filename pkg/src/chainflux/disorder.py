"""Normalized mass fluctuations B_k, with masses m_k = 1 + B_k."""
from dataclasses import dataclass

import numpy as np

__all__ = ["MassDisorder", "sample_b", "moment2", "density"]

KINDS = ("uniform", "quadratic")


@dataclass(frozen=True)
class MassDisorder:
    """Zero-mean density tau on [-a, a].

    kind ``"uniform"``: tau = 1/(2a).
    kind ``"quadratic"``: tau = 3/(4a) (1 - (b/a)^2), a truncated parabola.
    """

    kind: str = "uniform"
    halfwidth: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disorder kind {self.kind!r}; expected one of {KINDS}")
        a = float(self.halfwidth)
        if not np.isfinite(a) or a <= 0.0:
            raise ValueError("disorder halfwidth must be positive")
        if a >= 1.0:
            raise ValueError("halfwidth >= 1 allows non-positive masses")
        object.__setattr__(self, "halfwidth", a)

    @property
    def b_minus(self):
        return -self.halfwidth

    @property
    def b_plus(self):
        return self.halfwidth

    @property
    def b_max(self):
        return max(-self.b_minus, self.b_plus)

    def moment2(self):
        a = self.halfwidth
        return a * a / 3.0 if self.kind == "uniform" else a * a / 5.0

    def pdf(self, b):
        b = np.asarray(b, dtype=float)
        a = self.halfwidth
        inside = np.abs(b) <= a
        if self.kind == "uniform":
            val = np.full(b.shape, 0.5 / a)
        else:
            val = 0.75 / a * (1.0 - (b / a) ** 2)
        return np.where(inside, val, 0.0)

    def ppf(self, u):
        """Inverse CDF, vectorized."""
        u = np.asarray(u, dtype=float)
        a = self.halfwidth
        if self.kind == "uniform":
            return a * (2.0 * u - 1.0)
        # CDF solves 3t - t^3 = 2(2u - 1) with t = b/a; trigonometric root in [-1, 1]
        return 2.0 * a * np.sin(np.arcsin(np.clip(2.0 * u - 1.0, -1.0, 1.0)) / 3.0)

    def sample(self, stream, shape):
        return self.ppf(stream.uniform(shape))

    def to_dict(self):
        return {"kind": self.kind, "halfwidth": self.halfwidth}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=str(d.get("kind", "uniform")), halfwidth=float(d.get("halfwidth", 0.5)))


def sample_b(dist, stream, size=None):
    """Draw B from ``dist`` using ``stream``; scalar when ``size`` is None."""
    if size is None:
        return float(dist.sample(stream, 1)[0])
    return dist.sample(stream, size)


def moment2(dist):
    return dist.moment2()


def density(dist, b):
    out = dist.pdf(b)
    return float(out) if np.ndim(out) == 0 else out
