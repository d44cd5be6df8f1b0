"""Run configuration: flat TOML files, flag overrides, canonical hashing.

The config format is a flat TOML subset (no tables): ``key = value``
lines with string, number, boolean, or homogeneous-array values, plus
comments. The standard library of the supported Python floor has no
TOML reader and none is mirrored here, so a small strict parser for
exactly this subset lives below; anything outside the subset is
rejected loudly rather than guessed at.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import BmsvmError
from .model import Hyperparams
from .sampler import SamplerSchedule


class ConfigError(BmsvmError, ValueError):
    """Bad usage or configuration; maps to exit code 1."""


@dataclass
class RunConfig:
    """Flat settings for train/eval runs; every key has a CLI override."""

    dataset: str = ""
    label_column: object = 0
    delimiter: str = ","
    header: object = "auto"
    method: str = "bmsvm"
    # exactly one width mode: fixed value, grid, or in-chain sampling
    theta: float | None = None
    theta_grid: list | None = None
    theta_mh: bool = False
    eta: float = 1000.0
    a_sigma: float = 3.0
    b_sigma: float = 10.0
    a_tau: float = 4.0
    b_tau: float = 0.1
    a_theta: float = 0.1
    b_theta: float = 200.0
    z_proposal_sd: float = 0.5
    theta_proposal_sd: float = 0.25
    shape_mode: str = "paper"
    m1: int = 10000
    m2: int = 5000
    m: int = 10
    protocol: str = "loo"
    n_train: int | None = None
    n_repeats: int = 10
    n_test: int | None = None
    seed: int = 0
    out: str = "runs/out"
    jobs: int = 1
    map_lambda: float = 1.0
    map_max_iters: int = 1000
    map_step0: float = 0.5
    map_tol: float = 1e-6
    warm_start: bool = False
    fast_linalg: bool = False
    trace: bool = False

    def validate(self):
        if not self.dataset:
            raise ConfigError("no dataset path configured")
        if self.method not in ("map", "bmsvm"):
            raise ConfigError(f"method must be 'map' or 'bmsvm', got {self.method!r}")
        if self.protocol not in ("loo", "split"):
            raise ConfigError(f"protocol must be 'loo' or 'split', got {self.protocol!r}")
        modes = sum([self.theta is not None, bool(self.theta_grid), bool(self.theta_mh)])
        if modes != 1:
            raise ConfigError(
                "exactly one of theta, theta_grid, theta_mh must be set "
                f"(found {modes})"
            )
        if self.theta_mh and self.method == "map":
            raise ConfigError("theta_mh applies only to method 'bmsvm'")
        if self.protocol == "split" and not self.n_train:
            raise ConfigError("protocol 'split' requires n_train")
        if self.shape_mode not in ("paper", "exact"):
            raise ConfigError(f"shape_mode must be 'paper' or 'exact', got {self.shape_mode!r}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        try:
            self.schedule()
            self.hyperparams()
        except BmsvmError as exc:
            raise ConfigError(str(exc)) from exc

    def schedule(self) -> SamplerSchedule:
        return SamplerSchedule(self.m1, self.m2, self.m)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            a_sigma=self.a_sigma, b_sigma=self.b_sigma,
            a_tau=self.a_tau, b_tau=self.b_tau, eta=self.eta,
            theta_bounds=(self.a_theta, self.b_theta),
            z_proposal_sd=self.z_proposal_sd,
            theta_proposal_sd=self.theta_proposal_sd,
            sigma2_shape_mode=self.shape_mode,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)


def read_flat_toml(path) -> dict:
    """Parse the flat TOML subset used for run configs."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = _strip_comment(raw).strip()
            if not line:
                continue
            if line.startswith("["):
                raise ConfigError(f"{path}:{lineno}: tables are not supported; use flat keys")
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if not key or not all(ch.isalnum() or ch in "_-" for ch in key):
                raise ConfigError(f"{path}:{lineno}: bad key {key!r}")
            values[key.replace("-", "_")] = _parse_value(value.strip(), path, lineno)
    return values


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def _parse_value(text: str, path, lineno: int):
    if not text:
        raise ConfigError(f"{path}:{lineno}: empty value")
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part.strip(), path, lineno) for part in _split_array(inner)]
    if text in ("true", "false"):
        return text == "true"
    if (text.startswith('"') and text.endswith('"') and len(text) >= 2) or \
       (text.startswith("'") and text.endswith("'") and len(text) >= 2):
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: cannot parse value {text!r}") from None


def _split_array(inner: str):
    parts = []
    depth = 0
    quote = None
    current = []
    for ch in inner:
        if quote:
            if ch == quote:
                quote = None
            current.append(ch)
        elif ch in "\"'":
            quote = ch
            current.append(ch)
        elif ch == "[":
            depth += 1
            current.append(ch)
        elif ch == "]":
            depth -= 1
            current.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if current:
        parts.append("".join(current))
    return parts


def load_config(path) -> RunConfig:
    cfg = RunConfig.from_dict(read_flat_toml(path))
    return cfg
