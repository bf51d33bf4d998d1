"""Flat ``key=value`` configuration files.

One pair per line, ``#`` starts a comment, lists are comma-separated.
Unknown keys are rejected.  ``seed`` sets both ``distribution_seed`` and
``trial_seed`` unless those are given explicitly.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, RangeError, UnknownKey
from .risk_lab import ExperimentConfig


@dataclass(frozen=True)
class RunConfig:
    loss: str = "squared"
    R: float = 1.0
    B: float = 1.0
    dims: tuple[int, ...] = (5,)
    ns: tuple[int, ...] = (100, 200)
    trials: int = 500
    deltas: tuple[float, ...] = (0.1,)
    distribution_seed: int = 0
    trial_seed: int = 0
    atoms: int = 40
    bound_constant: float = 1.0
    corollary: bool = False
    cert_trials: int = 1000
    cert_samples: int = 1
    cover_r: float = 1.0
    cover_u: float = 0.5
    verify_points: int = 10000
    grid: int = 2001
    grid_2d: int = 201
    net_ratio: float = 4.0
    refine: bool = True

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            loss_kind=self.loss,
            radius_r=self.R,
            ball_b=self.B,
            dims=self.dims,
            sample_sizes=self.ns,
            trials=self.trials,
            deltas=self.deltas,
            distribution_seed=self.distribution_seed,
            trial_seed=self.trial_seed,
            atoms=self.atoms,
            bound_constant=self.bound_constant,
        )


HELP = {
    "loss": "squared | logistic",
    "R": "squared: label/ball radius; logistic: feature radius",
    "B": "logistic: ball radius of W",
    "dims": "comma-separated dimensions d",
    "ns": "comma-separated sample sizes n",
    "trials": "Monte Carlo trials per cell (>= max(100, 50/delta_min))",
    "deltas": "comma-separated confidence levels in (0, 1)",
    "seed": "sets distribution_seed and trial_seed together",
    "distribution_seed": "seed of the per-d data distribution",
    "trial_seed": "seed from which per-trial streams are split",
    "atoms": "support size m of the data distribution",
    "bound_constant": "constant c of the theory-bound overlay",
    "corollary": "use the min(d + log(1/delta), log n log(1/delta)) overlay",
    "cert_trials": "certify: random segments per sample",
    "cert_samples": "certify: random samples per (d, n)",
    "cover_r": "cover: radius r of W[0, r]",
    "cover_u": "cover: net scale u",
    "verify_points": "cover: sampled points of W[0, r] checked for coverage",
    "grid": "expmoment: grid points for d = 1",
    "grid_2d": "expmoment: grid points per axis for d = 2",
    "net_ratio": "expmoment: net scale is H-diameter / net_ratio for d >= 3",
    "refine": "expmoment: also run at doubled resolution and report the change",
}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT_LISTS = {"dims", "ns"}
_FLOAT_LISTS = {"deltas"}
_BOOLS = {"corollary", "refine"}
_INTS = {"trials", "distribution_seed", "trial_seed", "atoms", "cert_trials",
         "cert_samples", "verify_points", "grid", "grid_2d"}
_FLOATS = {"R", "B", "bound_constant", "cover_r", "cover_u", "net_ratio"}


def _convert(key: str, raw: str, line: int | None):
    try:
        if key in _INT_LISTS:
            return tuple(int(v) for v in raw.split(","))
        if key in _FLOAT_LISTS:
            return tuple(float(v) for v in raw.split(","))
        if key in _BOOLS:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if key in _INTS:
            return int(raw)
        if key in _FLOATS:
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for key {key!r}", line) from None


def parse_pairs(pairs, base: RunConfig | None = None) -> RunConfig:
    """Build a config from ``(line_number, key, value)`` triples."""
    values = {}
    seed = None
    for line, key, raw in pairs:
        if key == "seed":
            seed = _convert("trials", raw, line)
            continue
        if key not in _FIELDS:
            raise UnknownKey(f"unknown key {key!r}", line)
        values[key] = _convert(key, raw, line)
    if seed is not None:
        values.setdefault("distribution_seed", seed)
        values.setdefault("trial_seed", seed)
    cfg = dataclasses.replace(base or RunConfig(), **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    cfg.experiment()
    if cfg.cert_trials < 1 or cfg.cert_samples < 1:
        raise RangeError("cert_trials and cert_samples must be >= 1")
    if not 0 < cfg.cover_u <= cfg.cover_r:
        raise RangeError("cover scale must satisfy 0 < cover_u <= cover_r")
    if cfg.verify_points < 1 or cfg.grid < 2 or cfg.grid_2d < 2 or cfg.net_ratio < 1:
        raise RangeError("verify_points, grid sizes and net_ratio out of range")


def split_lines(text: str):
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", number)
        key, raw = line.split("=", 1)
        yield number, key.strip(), raw.strip()


def parse_config_text(text: str, overrides=()) -> RunConfig:
    pairs = list(split_lines(text))
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        pairs.append((None, key.strip(), raw.strip()))
    return parse_pairs(pairs)


def parse_config(path, overrides=()) -> RunConfig:
    text = Path(path).read_text()
    return parse_config_text(text, overrides)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: RunConfig) -> str:
    """Resolved config text; ``parse_config_text(format_config(c)) == c``."""
    lines = [f"{f}={_format_value(getattr(cfg, f))}" for f in _FIELDS]
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode("ascii")).hexdigest()
