"""Experiment configuration: a TOML file per run plus command-line overrides.

    schema_version = 1
    command = "scaling"
    seed = 2024

    [disorder]
    kind = "uniform"
    halfwidth = 0.5

    [params]
    n_grid = [128, 256, 512]
    samples = 200

Keys missing from ``[params]`` take the command defaults; unknown keys are
errors.  The config hash (and hence the output directory) depends only on the
normalized content, never on thread count or output location.
"""
import copy
import hashlib
import math
import sys
from dataclasses import dataclass, field

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .disorder import MassDisorder

__all__ = [
    "SCHEMA_VERSION",
    "COMMANDS",
    "DEFAULTS",
    "ConfigError",
    "ExperimentConfig",
    "parse",
    "serialize",
    "load",
    "parse_override",
]

SCHEMA_VERSION = 1
_I63 = (1 << 63) - 1
_U64 = (1 << 64) - 1

DEFAULTS = {
    "scaling": dict(
        n_grid=[128, 256, 512, 1024, 2048, 4096],
        samples=1000,
        block_size=32,
        u_max=12.0,
        w_max=4.0,
        nodes_per_panel=32,
        peak_nodes=16,
        bath="cl",
        bath_s=1.0,
        delta_t=1.0,
        slope_target=-1.5,
        slope_tol=0.15,
    ),
    "verify": dict(
        n_grid=[10, 100, 1000],
        w_grid=[0.001, 0.01, 0.1, 0.2],
        seeds=5,
        rel_tol=1e-9,
        wronskian_tol=1e-8,
        zero_noise_tol=1e-10,
        residual_min_w3n=1e-3,
        residual_spread=2.0,
        martingale_w=0.05,
        martingale_n=400,
        martingale_samples=20000,
        t_grid=[-3.0, -1.0, -0.3, 0.3, 1.0, 3.0],
        density_w=0.1,
        density_n=90,
        density_samples=200000,
        density_sup=2.8,
        density_inf=0.025,
        ergodic_w_grid=[0.1, 0.05, 0.025, 0.0125],
        ergodic_samples=20000,
        ergodic_slope_target=0.5,
        ergodic_slope_tol=0.15,
        inject_fault=False,
    ),
    "lyapunov": dict(
        w_grid=[0.02, 0.05],
        w2n=64.0,
        samples=400,
        burn_in_fraction=0.25,
        rel_tol=0.15,
    ),
    "gamma-tail": dict(
        w_grid=[0.02, 0.05],
        w2n_grid=[1.0, 2.0, 4.0],
        samples=10000,
        alpha_fraction=0.1,
        collapse_tol=0.25,
    ),
    "density": dict(
        calibration=[0.1, 100],
        cells=[[0.1, 30], [0.1, 90], [0.05, 360], [0.2, 25]],
        samples=1000000,
        seeds=3,
        x0=0.3,
        sup_factor=1.25,
        inf_factor=0.25,
    ),
    "spectral": dict(
        calibration=[300, 0.04],
        cells=[[100, 0.05], [1000, 0.02], [1000, 0.03]],
        eps=0.2,
        xi_points=24,
        lower_factor=1.25,
        upper_factor=0.8,
        kernel_factor=1.25,
        bump_y=[0.1, 0.35, 0.7],
    ),
    "crosscheck": dict(
        n=8,
        configs=3,
        T1=2.0,
        Tn=1.0,
        lam=1.0,
        dt=0.0,
        t_burn=0.0,
        t_total=100000.0,
        blocks=32,
        scheme="baoab",
        cv_tol=0.1,
        equilibrium=True,
    ),
    "rg-sandwich": dict(
        w_grid=[0.05, 0.1],
        w2n_grid=[1.0, 4.0, 16.0, 32.0, 64.0],
        samples=256,
        integral_n_grid=[4096, 16384, 65536],
        integral_samples=64,
        w0=0.2,
        exponent_target=-0.5,
        exponent_tol=0.2,
    ),
}
COMMANDS = tuple(DEFAULTS)

# frequencies entering the circle-map representation must satisfy w <= 0.2
_W_KEYS = {"w_grid", "martingale_w", "density_w", "w0", "ergodic_w_grid"}
_MAX_CROSSCHECK_N = 32


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


@dataclass
class ExperimentConfig:
    command: str
    seed: int = 0
    disorder: dict = field(default_factory=lambda: {"kind": "uniform", "halfwidth": 0.5})
    params: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.command not in DEFAULTS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        merged = copy.deepcopy(DEFAULTS[self.command])
        for k, v in self.params.items():
            if k not in merged:
                raise ConfigError(f"unknown parameter {k!r} for {self.command}")
            merged[k] = _coerce(k, v, merged[k])
        self.params = merged
        self.seed = _seed(self.seed)
        self.disorder = dict(self.disorder)
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {self.schema_version} is not supported (expected {SCHEMA_VERSION})")
        extra = set(self.disorder) - {"kind", "halfwidth"}
        if extra:
            raise ConfigError(f"unknown disorder keys {sorted(extra)}")
        try:
            self.distribution()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"disorder: {e}") from None
        p = self.params
        for k, v in p.items():
            if k in _W_KEYS:
                for w in (v if isinstance(v, list) else [v]):
                    if not 0.0 < w <= 0.2:
                        raise ConfigError(f"{k}: frequency {w} outside (0, 0.2]")
            if k.endswith("samples") or k in ("samples", "seeds", "configs", "blocks", "block_size"):
                if v < 1:
                    raise ConfigError(f"{k} must be >= 1")
            if k.endswith("_grid") and not v:
                raise ConfigError(f"{k} must not be empty")
        for k in ("n_grid", "integral_n_grid"):
            if k in p and any(n < 1 for n in p[k]):
                raise ConfigError(f"{k}: chain lengths must be >= 1")
        if self.command == "scaling":
            if len(p["n_grid"]) < 2:
                raise ConfigError("n_grid needs at least two chain lengths for a fit")
            if p["bath"] not in ("cl", "dhar"):
                raise ConfigError("bath must be 'cl' or 'dhar'")
            if not (p["u_max"] > 0 and p["w_max"] > 0 and p["nodes_per_panel"] >= 1 and p["peak_nodes"] >= 1):
                raise ConfigError("u_max, w_max and the node counts must be positive")
        if self.command == "lyapunov":
            if p["w2n"] < 8.0:
                raise ConfigError("lyapunov needs w2n >= 8")
            if not 0.0 <= p["burn_in_fraction"] < 1.0:
                raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if self.command == "crosscheck":
            if not 2 <= p["n"] <= _MAX_CROSSCHECK_N:
                raise ConfigError(f"crosscheck n = {p['n']} outside [2, {_MAX_CROSSCHECK_N}]; "
                                  f"the SDE path is limited to n <= {_MAX_CROSSCHECK_N}")
            if p["scheme"] not in ("em", "symplectic", "baoab"):
                raise ConfigError("scheme must be em, symplectic or baoab")
            if not (p["Tn"] > 0 and p["T1"] >= p["Tn"] and p["lam"] > 0):
                raise ConfigError("need T1 >= Tn > 0 and lam > 0")
        if self.command in ("density", "spectral"):
            for cell in p["cells"] + [p["calibration"]]:
                if len(cell) != 2:
                    raise ConfigError("cells are [w, n] / [n, w] pairs")
        if self.command == "density":
            for w, n in p["cells"] + [p["calibration"]]:
                if not 0 < w <= 0.2 or n < 1:
                    raise ConfigError(f"density cell {[w, n]} invalid")
        if self.command == "spectral":
            for n, w in p["cells"] + [p["calibration"]]:
                if not 0 < w <= 0.2 or n < 1:
                    raise ConfigError(f"spectral cell {[n, w]} invalid")

    def distribution(self):
        return MassDisorder(self.disorder.get("kind", "uniform"), float(self.disorder.get("halfwidth", 0.5)))

    def to_dict(self):
        seed = self.seed if self.seed <= _I63 else str(self.seed)
        return {"schema_version": self.schema_version, "command": self.command, "seed": seed,
                "disorder": dict(sorted(self.disorder.items())), "params": dict(sorted(self.params.items()))}

    def hash(self):
        return hashlib.sha256(serialize(self).encode("utf8")).hexdigest()[:12]

    def with_overrides(self, seed=None, params=None):
        p = dict(self.params)
        p.update(params or {})
        return ExperimentConfig(self.command, self.seed if seed is None else seed, dict(self.disorder), p,
                                self.schema_version)


def _seed(v):
    try:
        s = int(v, 0) if isinstance(v, str) else int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"seed {v!r} is not an integer") from None
    if isinstance(v, float) or not 0 <= s <= _U64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return s


def _coerce(key, value, default):
    """Match the type of the default; ints are accepted for floats, nothing else is converted."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        if not math.isfinite(value):
            raise ConfigError(f"{key} must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        if default and isinstance(default[0], list):
            return [_coerce(key, list(v) if isinstance(v, (list, tuple)) else v, default[0]) for v in value]
        if len({type(v) for v in default}) > 1:
            # heterogeneous pair such as [n, w]: match positionally
            if len(value) != len(default):
                raise ConfigError(f"{key} must have {len(default)} entries")
            return [_coerce(key, v, d) for v, d in zip(value, default)]
        proto = default[0] if default else 0.0
        if isinstance(proto, float):
            return [_coerce(key, v, 0.0) for v in value]
        if isinstance(proto, int):
            return [_coerce(key, v, 0) for v in value]
        return list(value)
    raise ConfigError(f"cannot interpret {key}")


def serialize(cfg):
    return tomli_w.dumps(cfg.to_dict())


def parse(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}") from None
    unknown = set(data) - {"schema_version", "command", "seed", "disorder", "params"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "command" not in data:
        raise ConfigError("config must name a command")
    return ExperimentConfig(data["command"], data.get("seed", 0),
                            data.get("disorder", {"kind": "uniform", "halfwidth": 0.5}),
                            data.get("params", {}), data.get("schema_version", SCHEMA_VERSION))


def load(path, command=None):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    cfg = parse(text)
    if command is not None and cfg.command != command:
        raise ConfigError(f"config is for {cfg.command!r}, not {command!r}")
    return cfg


def parse_override(item):
    """'key=value' with a TOML value; bare words are taken as strings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value
