"""chainflux command line.

    chainflux scaling --config run.toml --seed 7 --threads 8
    chainflux verify --set inject_fault=true
    chainflux crosscheck --out results/

Every run writes into <out>/<command>-<config hash>/: the normalized config,
one CSV per table (metadata comment block, then a header row), summary.json,
and timing.log.  Only timing.log depends on the machine.

Exit codes: 0 pass (or no gate), 1 gate failed, 2 config error, 3 numeric guard.
"""
import argparse
import csv
import io
import os
import platform
import sys
import time

import numba
import numpy as np
import scipy

from . import __version__
from .circlemap import DegenerateAmplitude
from .config import COMMANDS, ConfigError, ExperimentConfig, load, parse_override, serialize
from .current import TailNotConverged
from .experiments import RUNNERS, Interrupted, RunCheckpoint, dumps
from .sde import NonFiniteState
from .spectral import CutoffTooSmall
from .transfer import OverflowGuard

__all__ = ["main", "build_parser", "run", "write_csv", "EXIT_PASS", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
EXIT_INTERRUPTED = 130

_NUMERIC_ERRORS = (OverflowGuard, TailNotConverged, NonFiniteState, DegenerateAmplitude, CutoffTooSmall,
                   FloatingPointError)


def build_parser():
    ap = argparse.ArgumentParser(prog="chainflux", description="Heat current in disordered harmonic chains.")
    ap.add_argument("--version", action="version", version=f"chainflux {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", metavar="PATH", help="TOML config; flags override its values")
        sp.add_argument("--seed", metavar="U64", help="unsigned 64-bit seed")
        sp.add_argument("--threads", type=int, default=None, metavar="N",
                        help="worker threads (default: logical cores)")
        sp.add_argument("--out", metavar="DIR", help="output root (default: $CHAINFLUX_OUT or ./chainflux-out)")
        sp.add_argument("--resume", action="store_true", help="reuse finished blocks from a previous run")
        sp.add_argument("--samples", type=int, default=None, help="override the sample count")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a parameter (TOML value syntax)")
        sp.add_argument("--print-config", action="store_true", help="print the effective config and exit")
        if name == "verify":
            sp.add_argument("--inject-fault", action="store_true",
                            help="flip the sign of s(x) to check that the residual test can fail")
        sp.add_argument("--stop-after", type=int, default=None, help=argparse.SUPPRESS)
    return ap


def effective_config(args):
    cfg = load(args.config, args.command) if args.config else ExperimentConfig(args.command)
    params = dict(parse_override(s) for s in args.set)
    if args.samples is not None:
        if "samples" not in cfg.params:
            raise ConfigError(f"{args.command} has no 'samples' parameter")
        params["samples"] = args.samples
    if getattr(args, "inject_fault", False):
        params["inject_fault"] = True
    return cfg.with_overrides(seed=args.seed, params=params)


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def metadata(cfg):
    return [
        f"chainflux {__version__}",
        f"command: {cfg.command}",
        f"config_hash: {cfg.hash()}",
        f"seed: {cfg.seed}",
        f"python {platform.python_version()}, numpy {np.__version__}, scipy {scipy.__version__}, "
        f"numba {numba.__version__}",
    ]


def write_csv(path, header, rows, meta):
    buf = io.StringIO()
    for line in meta:
        buf.write(f"# {line}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_fmt(v) for v in r])
    _write_text(path, buf.getvalue())


def _write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def output_dir(cfg, out=None):
    root = out or os.environ.get("CHAINFLUX_OUT") or "chainflux-out"
    return os.path.join(root, f"{cfg.command}-{cfg.hash()}")


def run(cfg, out=None, threads=None, resume=False, stop_after=None, log=sys.stderr):
    """Run one experiment and persist it; returns (exit code, output directory)."""
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    outdir = output_dir(cfg, out)
    os.makedirs(outdir, exist_ok=True)
    _write_text(os.path.join(outdir, "config.toml"), serialize(cfg))
    t0 = time.perf_counter()
    kwargs = {}
    if cfg.command == "scaling":
        ckpt = RunCheckpoint(os.path.join(outdir, "checkpoint"))
        if not resume:
            ckpt.clear()
        kwargs = dict(checkpoint=ckpt, stop_after=stop_after)
    result = RUNNERS[cfg.command](cfg, threads=threads, **kwargs)
    wall = time.perf_counter() - t0
    meta = metadata(cfg)
    for name, (header, rows) in result.tables.items():
        write_csv(os.path.join(outdir, f"{name}.csv"), header, rows, meta)
    summary = dict(result.summary)
    summary["config_hash"] = cfg.hash()
    summary["version"] = __version__
    summary["passed"] = result.passed
    _write_text(os.path.join(outdir, "summary.json"), dumps(summary))
    _write_text(os.path.join(outdir, "timing.log"), f"wall_seconds {wall:.3f}\nthreads {threads}\n")
    status = "no gate" if result.passed is None else ("PASS" if result.passed else "FAIL")
    print(f"{cfg.command}: {status} -> {outdir}", file=log)
    return (EXIT_FAIL if result.passed is False else EXIT_PASS), outdir


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        if args.print_config:
            sys.stdout.write(serialize(cfg))
            return EXIT_PASS
        if args.command != "scaling" and args.stop_after is not None:
            raise ConfigError("--stop-after applies to scaling only")
        code, _ = run(cfg, args.out, args.threads, args.resume, args.stop_after)
        return code
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as e:
        print(f"numeric guard: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except Interrupted as e:
        print(f"interrupted: {e}; rerun with --resume", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
