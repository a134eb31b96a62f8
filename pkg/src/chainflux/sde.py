"""Langevin simulation of the chain with heat baths at both ends.

    dq_k = p_k / m_k dt
    dp_k = -(2 q_k - q_{k-1} - q_{k+1}) dt - lam p_k dt + sqrt(2 lam T_k m_k) dW_k,   k in {1, n}

with fixed walls q_0 = q_{n+1} = 0 and unit springs.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import solve_continuous_lyapunov

from .current import BathFamily, integrate_current_adaptive
from .rng import RandomStream

__all__ = [
    "NonFiniteState",
    "ChainState",
    "SCHEMES",
    "langevin_step",
    "default_dt",
    "SteadyCurrent",
    "steady_current_estimate",
    "exact_current",
    "formula_current",
    "crosscheck_ratio",
]

SCHEMES = ("em", "symplectic", "baoab")
_SCHEME_ID = {s: i for i, s in enumerate(SCHEMES)}


class NonFiniteState(FloatingPointError):
    pass


@dataclass
class ChainState:
    q: np.ndarray
    p: np.ndarray
    masses: np.ndarray
    T1: float
    Tn: float
    lam: float
    t: float = 0.0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        n = self.masses.size
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float).copy()
        self.p = np.zeros(n) if self.p is None else np.asarray(self.p, dtype=float).copy()
        if n < 2:
            raise ValueError("need at least two sites")
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")
        if self.Tn <= 0 or self.T1 < self.Tn:
            raise ValueError("need T1 >= Tn > 0")
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    @classmethod
    def at_rest(cls, masses, T1, Tn, lam):
        return cls(None, None, masses, T1, Tn, lam)

    def energy(self):
        q = np.concatenate([[0.0], self.q, [0.0]])
        return float(0.5 * np.sum(self.p ** 2 / self.masses) + 0.5 * np.sum(np.diff(q) ** 2))


@njit(cache=True)
def _force(q, f):
    n = q.size
    for k in range(n):
        left = q[k - 1] if k > 0 else 0.0
        right = q[k + 1] if k < n - 1 else 0.0
        f[k] = left + right - 2.0 * q[k]


@njit(cache=True)
def _advance(q, p, m, T1, Tn, lam, dt, noise, scheme, acc, start_acc):
    """Integrate len(noise) steps; noise[:, 0/1] are standard normals for sites 1 and n.

    acc[k] accumulates the bond flux -(q_{k+1} - q_k)(v_k + v_{k+1}) / 2 for
    steps with index >= start_acc.  Returns False on a non-finite state.
    """
    n = q.size
    f = np.empty(n)
    _force(q, f)
    c = math.exp(-lam * dt)
    s1 = math.sqrt(T1 * m[0] * (1.0 - c * c))
    sn = math.sqrt(Tn * m[n - 1] * (1.0 - c * c))
    e1 = math.sqrt(2.0 * lam * T1 * m[0] * dt)
    en = math.sqrt(2.0 * lam * Tn * m[n - 1] * dt)
    for it in range(noise.shape[0]):
        if scheme == 0:
            # Euler-Maruyama: all increments from the old state
            for k in range(n):
                dq = p[k] / m[k] * dt
                p[k] += f[k] * dt
                q[k] += dq
            p[0] += -lam * (p[0] - f[0] * dt) * dt + e1 * noise[it, 0]
            p[n - 1] += -lam * (p[n - 1] - f[n - 1] * dt) * dt + en * noise[it, 1]
            _force(q, f)
        elif scheme == 1:
            # semi-implicit Euler: kick (with friction and noise), then drift
            for k in range(n):
                p[k] += f[k] * dt
            p[0] += -lam * p[0] * dt + e1 * noise[it, 0]
            p[n - 1] += -lam * p[n - 1] * dt + en * noise[it, 1]
            for k in range(n):
                q[k] += p[k] / m[k] * dt
            _force(q, f)
        else:
            # BAOAB: half kick, half drift, exact OU on the end momenta, half drift, half kick
            for k in range(n):
                p[k] += 0.5 * dt * f[k]
                q[k] += 0.5 * dt * p[k] / m[k]
            p[0] = c * p[0] + s1 * noise[it, 0]
            p[n - 1] = c * p[n - 1] + sn * noise[it, 1]
            for k in range(n):
                q[k] += 0.5 * dt * p[k] / m[k]
            _force(q, f)
            for k in range(n):
                p[k] += 0.5 * dt * f[k]
        if it >= start_acc:
            for k in range(n - 1):
                acc[k] -= 0.5 * (q[k + 1] - q[k]) * (p[k] / m[k] + p[k + 1] / m[k + 1])
        if not (math.isfinite(q[0]) and math.isfinite(p[n - 1])):
            return False
    return True


def langevin_step(state, dt, stream, scheme="baoab"):
    """Advance ``state`` by one step using two normals from ``stream``; returns a new state."""
    if dt <= 0 or dt * state.lam >= 0.1:
        raise ValueError("need 0 < dt and dt * lam < 0.1")
    noise = stream.normal((1, 2))
    out = ChainState(state.q, state.p, state.masses, state.T1, state.Tn, state.lam, state.t + dt)
    acc = np.zeros(out.q.size - 1)
    ok = _advance(out.q, out.p, out.masses, out.T1, out.Tn, out.lam, float(dt), noise,
                  _SCHEME_ID[scheme], acc, 1)
    if not ok or not (np.all(np.isfinite(out.q)) and np.all(np.isfinite(out.p))):
        raise NonFiniteState("state left the finite range; dt too large")
    return out


def default_dt(masses, lam):
    return 0.01 * min(1.0 / lam, math.sqrt(float(np.min(masses))))


@dataclass
class SteadyCurrent:
    J: float
    stderr: float
    bond_means: np.ndarray
    bond_stderr: np.ndarray
    blocks: int
    steps: int
    meta: dict = field(default_factory=dict)

    @property
    def homogeneity(self):
        """max over bonds of |j_bond - J| in units of the combined error."""
        err = np.sqrt(self.bond_stderr ** 2 + self.stderr ** 2)
        return float(np.max(np.abs(self.bond_means - self.J) / np.where(err > 0, err, np.inf)))


def steady_current_estimate(n, masses, T1, Tn, lam, dt=None, t_burn=None, t_total=None, stream=None,
                            scheme="baoab", blocks=32, chunk=1 << 16):
    """Time-averaged bond flux after burn-in, with a blocked standard error.

    Defaults: t_burn = 50 n / lam and t_total = 40 t_burn.
    """
    masses = np.asarray(masses, dtype=float)
    if masses.size != n:
        raise ValueError("masses must have length n")
    state = ChainState.at_rest(masses, T1, Tn, lam)
    dt = default_dt(masses, lam) if dt is None else float(dt)
    t_burn = 50.0 * n / lam if t_burn is None else float(t_burn)
    t_total = 40.0 * t_burn if t_total is None else float(t_total)
    stream = stream or RandomStream(0, ("sde",))
    burn_steps = int(round(t_burn / dt))
    per_block = max(1, int(round(t_total / dt / blocks)))
    sid = _SCHEME_ID[scheme]
    q, p = state.q, state.p
    counter = 0

    def run(steps, acc):
        nonlocal counter
        done = 0
        while done < steps:
            m = min(chunk, steps - done)
            noise = stream.child(counter).normal((m, 2))
            counter += 1
            if not _advance(q, p, masses, float(T1), float(Tn), float(lam), dt, noise, sid, acc, 0):
                raise NonFiniteState("state left the finite range; dt too large")
            done += m

    run(burn_steps, np.zeros(n - 1))
    block_bonds = np.empty((blocks, n - 1))
    for j in range(blocks):
        acc = np.zeros(n - 1)
        run(per_block, acc)
        block_bonds[j] = acc / per_block
    site_avg = block_bonds.mean(axis=1)
    J = float(site_avg.mean())
    se = float(site_avg.std(ddof=1) / math.sqrt(blocks))
    bond_means = block_bonds.mean(axis=0)
    bond_se = block_bonds.std(axis=0, ddof=1) / math.sqrt(blocks)
    return SteadyCurrent(J, se, bond_means, bond_se, blocks, burn_steps + blocks * per_block,
                         dict(dt=dt, t_burn=t_burn, t_total=per_block * blocks * dt, scheme=scheme))


def exact_current(masses, T1, Tn, lam):
    """Stationary current from the Lyapunov equation for the covariance, lam (T1 - <p_1^2>/m_1)."""
    m = np.asarray(masses, dtype=float)
    n = m.size
    Kmat = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.diag(1.0 / m)
    A[n:, :n] = -Kmat
    A[n, n] = -lam
    A[2 * n - 1, 2 * n - 1] = -lam
    D = np.zeros((2 * n, 2 * n))
    D[n, n] = 2.0 * lam * T1 * m[0]
    D[2 * n - 1, 2 * n - 1] = 2.0 * lam * Tn * m[-1]
    C = solve_continuous_lyapunov(A, -D)
    return float(lam * (T1 - C[n, n] / m[0]))


def formula_current(masses, T1, Tn, lam, rtol=1e-9):
    """Transfer-matrix current for the frozen masses with the physical Langevin bath."""
    b = np.asarray(masses, dtype=float) - 1.0
    bath = BathFamily("cl-physical", lam=lam)
    return (T1 - Tn) * integrate_current_adaptive(b.size, b, rtol=rtol, bath=bath)


def crosscheck_ratio(configs, seed=0, scheme="baoab", dt=None, t_burn=None, t_total=None, blocks=32):
    """J_SDE / J_formula for each config dict (masses, T1, Tn, lam); adds the coefficient of variation.

    Each config gets its own stream, keyed by its position in the list.
    """
    rows = []
    for i, c in enumerate(configs):
        m = np.asarray(c["masses"], dtype=float)
        lam = float(c.get("lam", 1.0))
        T1, Tn = float(c["T1"]), float(c["Tn"])
        est = steady_current_estimate(m.size, m, T1, Tn, lam, dt=dt, t_burn=t_burn, t_total=t_total,
                                      stream=RandomStream(seed, ("crosscheck", i)), scheme=scheme,
                                      blocks=blocks)
        jf = formula_current(m, T1, Tn, lam)
        rows.append(dict(index=i, n=int(m.size), T1=T1, Tn=Tn, lam=lam, J_sde=est.J, stderr=est.stderr,
                         J_formula=jf, J_exact=exact_current(m, T1, Tn, lam),
                         ratio=est.J / jf if jf != 0 else math.nan, homogeneity=est.homogeneity))
    ratios = np.array([r["ratio"] for r in rows if np.isfinite(r["ratio"])])
    cv = float(ratios.std(ddof=1) / abs(ratios.mean())) if ratios.size > 1 else math.nan
    return dict(rows=rows, cv=cv, mean_ratio=float(ratios.mean()) if ratios.size else math.nan)
