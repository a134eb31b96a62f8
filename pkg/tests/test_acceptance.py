"""Full-size acceptance runs, one test per criterion.

Each test records a one-line verdict in ``criterion_log``; the lines are
printed in the pytest terminal summary.  Slow: about 15 minutes on one core.
"""
import math
import os

import numpy as np
import pytest

from chainflux.cli import run
from chainflux.config import ExperimentConfig
from chainflux.disorder import MassDisorder
from chainflux.experiments import (
    Interrupted,
    representation_errors,
    residual_constants,
    run_crosscheck,
    run_density,
    run_gamma_tail,
    run_lyapunov,
    run_rg_sandwich,
    run_scaling,
    run_spectral,
    wronskian_errors,
    zero_noise_error,
)
from chainflux.martingale import (
    block_martingale,
    ergodic_rate,
    s_martingale,
    tail_check,
    verify_exponential_bound,
)
from chainflux.rng import RandomStream
from chainflux.sde import steady_current_estimate

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

U = MassDisorder("uniform", 0.5)
SEED = 2024
W_GRID = [1e-3, 1e-2, 0.1, 0.2]
N_GRID = [10, 100, 1000, 10000]


def _record(log, num, name, ok, detail):
    log.append((num, name, bool(ok), detail))
    assert ok, f"criterion {num} ({name}): {detail}"


def test_c01_scaling_law(criterion_log):
    cfg = ExperimentConfig("scaling", SEED, params={"samples": 800})
    res = run_scaling(cfg, threads=1)
    s = res.summary
    nj = ", ".join(f"{r[0]}:{r[4]:.2f}" for r in res.tables["scaling"][1])
    _record(criterion_log, 1, "scaling law", res.passed,
            f"slope {s['slope']:.3f} +- {s['slope_stderr']:.3f}, target -1.50 +- 0.15; n^1.5 E[J] {nj}")


def test_c02_representation_identity(criterion_log):
    rows = representation_errors(U, SEED, W_GRID, N_GRID, 100)
    worst = max(r[2] for r in rows)
    _record(criterion_log, 2, "representation identity", worst <= 1e-9,
            f"worst rel err {worst:.2e} <= 1e-09 over {len(rows)} cells x 100 seeds x (e1, e2)")


def test_c03_residual_constant(criterion_log):
    rows = residual_constants(U, SEED, W_GRID, N_GRID, 100, min_w3n=1e-3)
    C = np.array([r[2] for r in rows])
    acc = np.array([r[3] for r in rows])
    spread = C.max() / C.min()
    ok = bool(np.all(acc <= C.max()) and spread <= 2.0)
    _record(criterion_log, 3, "exponential-form residual", ok,
            f"C = {C.max():.3f}, spread {spread:.2f} <= 2 over {len(rows)} cells; max accumulated/(w^3 n) "
            f"{acc.max():.3f}")


def test_c04_wronskian(criterion_log):
    rows = wronskian_errors(U, SEED, W_GRID, N_GRID, 100)
    worst = max(r[2] for r in rows)
    mp = sum(r[3] for r in rows)
    _record(criterion_log, 4, "Wronskian", worst <= 1e-8,
            f"max |W - 1| {worst:.2e} <= 1e-08 ({mp} cells needed extended precision)")


def test_c05_zero_noise(criterion_log):
    # pointwise on the n grid, and relative to the amplitude at every k <= 1000;
    # pointwise at every k is reported only: it is ill-conditioned next to zeros of sin
    pointwise = amplitude = every_k = 0.0
    for w in (1e-3, 1e-2, 0.05, 0.1):
        p, a = zero_noise_error(w, [10, 100, 1000])
        pointwise, amplitude = max(pointwise, p), max(amplitude, a)
        every_k = max(every_k, zero_noise_error(w, np.arange(1, 1001))[0])
    ok = max(pointwise, amplitude) <= 1e-10
    _record(criterion_log, 5, "zero-noise closed form", ok,
            f"rel err {pointwise:.2e} at n = 10, 100, 1000; amplitude-relative {amplitude:.2e} for all k <= 1000; "
            f"tol 1e-10 (pointwise at every k: {every_k:.2e})")


def test_c06_lyapunov(criterion_log):
    res = run_lyapunov(ExperimentConfig("lyapunov", SEED), threads=1)
    ratios = res.summary["ratios"]
    _record(criterion_log, 6, "Lyapunov exponent", res.passed,
            "gamma/(w^2 pi^2/96) = " + ", ".join(f"{r:.3f}" for r in ratios) + " (w = 0.02, 0.05), tol 15%")


def test_c07_inverse_amplitude(criterion_log):
    res = run_gamma_tail(ExperimentConfig("gamma-tail", SEED), threads=1)
    s = res.summary
    spread = max(s["collapse_spread"].values())
    _record(criterion_log, 7, "E[1/Gamma] decay", res.passed,
            f"min alpha {s['alpha_min']:.4f} >= {s['alpha_floor']:.4f}; worst collapse spread {spread:.3f} <= 0.25")


def test_c08_martingale_bounds(criterion_log):
    w, n, S = 0.05, 400, 100000
    t_grid = [-3.0, -1.0, -0.3, 0.3, 1.0, 3.0]
    L = int(math.floor(1.0 / w))
    parts, ok = [], True
    for label, sample in (("s", s_martingale(w, n, S, U, SEED)),
                          ("Z", block_martingale(w, n // L, S, U, SEED))):
        mgf = verify_exponential_bound(sample, t_grid)
        tail = tail_check(sample, (1.0, 2.0, 3.0))
        ok &= mgf.passed and tail.passed
        margin = min(min(r["margin_freedman"], r["margin_azuma"]) for r in mgf.rows)
        parts.append(f"{label}: mgf {'ok' if mgf.passed else 'FAIL'} (min log margin {margin:.3f}), "
                     f"tail {'ok' if tail.passed else 'FAIL'}")
    _record(criterion_log, 8, "Freedman/Azuma", ok, "; ".join(parts))


def test_c09_density(criterion_log):
    res = run_density(ExperimentConfig("density", SEED), threads=1)
    rows = res.tables["density"][1]
    worst_sup = max(r[7] / r[8] for r in rows if r[9] != "n/a")
    worst_inf = min(r[10] / r[11] for r in rows if r[12] != "n/a")
    _record(criterion_log, 9, "density bounds", res.passed,
            f"K = {res.summary['K']:.3f}, K' = {res.summary['K_prime']:.4f}; max sup/K {worst_sup:.3f}, "
            f"min inf/K' {worst_inf:.3f} over {len(rows)} cell-seeds")


def test_c10_fourier_sandwich(criterion_log):
    res = run_spectral(ExperimentConfig("spectral", SEED), threads=1)
    rows = res.tables["spectral"][1]
    qlo = min(r[2] for r in rows)
    qhi = max(r[3] for r in rows)
    kr = max(r[7] for r in rows)
    s = res.summary
    _record(criterion_log, 10, "Fourier sandwich", res.passed,
            f"q in [{qlo:.3f}, {qhi:.3f}] within [K' {s['K_prime']:.3f}, K {s['K']:.3f}]; "
            f"kernel ratio {kr:.3f} <= {s['K_kernel']:.3f}")


def test_c11_ergodic_rate(criterion_log):
    rows, slope = ergodic_rate([0.1, 0.05, 0.025, 0.0125], 100000, U, SEED)
    _record(criterion_log, 11, "ergodic-average rate", abs(slope - 0.5) <= 0.15,
            f"slope {slope:.3f}, target 0.50 +- 0.15")


def test_c12_sde_crosscheck(criterion_log):
    parts, ok = [], True
    for n in (8, 16):
        res = run_crosscheck(ExperimentConfig("crosscheck", SEED, params={"n": n, "configs": 3}), threads=1)
        s = res.summary
        ok &= res.passed
        eq = s["equilibrium"]
        parts.append(f"n={n}: CV {s['cv']:.3f}, equilibrium |J|/se {abs(eq['J']) / eq['stderr']:.2f}")
    J = [steady_current_estimate(n, np.ones(n), 2.0, 1.0, 1.0, stream=RandomStream(SEED, ("ordered", n))).J
         for n in (8, 16, 32)]
    spread = max(J) / min(J) - 1.0
    ok &= spread <= 0.1
    parts.append(f"ordered n=8,16,32 spread {spread:.3f}")
    _record(criterion_log, 12, "SDE cross-validation", ok, "; ".join(parts))


def test_c13_rubin_greer(criterion_log):
    res = run_rg_sandwich(ExperimentConfig("rg-sandwich", SEED), threads=1)
    s = res.summary
    rates = ", ".join(f"{r:.3f}" for r in s["decay_rates"].values())
    _record(criterion_log, 13, "Rubin-Greer sandwich", res.passed,
            f"decay rates {rates} > 0; integral exponent {s['integral_exponent']:.3f}, target -0.5 +- 0.2")


_SMALL = {
    "scaling": {"n_grid": [32, 64, 128], "samples": 12, "block_size": 4},
    "verify": {"seeds": 2, "martingale_samples": 4000, "density_samples": 20000, "ergodic_samples": 4000},
    "lyapunov": {"samples": 40},
    "gamma-tail": {"samples": 1000},
    "density": {"samples": 20000, "seeds": 1},
    "spectral": {},
    "crosscheck": {"t_total": 20000.0},
    "rg-sandwich": {"samples": 32, "integral_n_grid": [1024, 4096], "integral_samples": 8},
}


def _bytes(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))
            if f.endswith((".csv", ".json", ".toml"))}


def test_c14_determinism(criterion_log, tmp_path, capsys):
    bad = []
    for command, params in _SMALL.items():
        cfg = ExperimentConfig(command, SEED, params=params)
        _, a = run(cfg, str(tmp_path / "a"), threads=1)
        _, b = run(cfg, str(tmp_path / "b"), threads=2)
        if _bytes(a) != _bytes(b):
            bad.append(command)
    cfg = ExperimentConfig("scaling", SEED, params=_SMALL["scaling"])
    with pytest.raises(Interrupted):
        run(cfg, str(tmp_path / "c"), threads=1, stop_after=5)
    _, c = run(cfg, str(tmp_path / "c"), threads=1, resume=True)
    if _bytes(c) != _bytes(os.path.join(tmp_path / "a", os.path.basename(c))):
        bad.append("scaling-resume")
    _record(criterion_log, 14, "determinism", not bad,
            f"{len(_SMALL)} commands rerun plus a resumed scaling run; mismatches: {bad or 'none'}")
