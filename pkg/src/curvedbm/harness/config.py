"""Experiment configuration: parsing, defaults and round-tripping.

A config is a flat mapping of scalars.  Reports echo it as `key=value`
lines, so a report file alone is enough to rerun the experiment.  Model
and perturbation specs are short strings, e.g.

    model         h2 | h3 | euclidean
    perturbation  none | bump:cx,cy,radius,amp | zero-mean:cx,cy,r_in,r_out,amp
                  | scaling:c | sum:<spec>;<spec>
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUBCOMMANDS = ("oracle", "riccati", "drift", "entropy", "exit-angles", "bridge", "girsanov-check",
               "great-terms", "entropy-derivative", "ibp-check", "flow-fs")


class ConfigError(ValueError):
    """Invalid configuration (usage error)."""


@dataclass
class ExperimentConfig:
    subcommand: str
    model: str = "h2"
    perturbation: str = "none"
    T: float = 1.0
    dt: float = 0.01
    paths: int = 1000
    seed: int = 0
    horizon: float = 20.0
    lam: float = 1e-3
    s0: float = 0.1
    x0: str = ""
    params: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "csv"
    workers: int = 1

    # execution-only fields are not echoed, so reports do not depend on them
    _execution = ("out", "format", "workers")

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.T <= 0 or self.dt <= 0 or self.dt > self.T:
            raise ConfigError("need 0 < dt <= T")
        if self.paths < 1:
            raise ConfigError("paths must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        self.dimension  # validates the model string
        if self.x0:
            parse_point(self.x0)

    @property
    def dimension(self):
        try:
            return {"h2": 2, "h3": 3, "euclidean": 2, "e2": 2, "e3": 3}[self.model]
        except KeyError:
            raise ConfigError(f"unknown model {self.model!r}") from None

    @property
    def start(self):
        """x0, defaulting to (0, ..., 0, 1)."""
        if not self.x0:
            return np.eye(self.dimension)[-1]
        x = parse_point(self.x0)
        if x.size != self.dimension:
            raise ConfigError(f"x0 has {x.size} coordinates, model needs {self.dimension}")
        return x

    def param(self, key, default):
        v = self.params.get(key, default)
        return type(default)(v) if default is not None and not isinstance(default, bool) else v

    def echo(self):
        """Ordered key/value pairs that fully determine the results."""
        d = {}
        for f in dataclasses.fields(self):
            if f.name in self._execution or f.name == "params":
                continue
            d[f.name] = getattr(self, f.name)
        for k in sorted(self.params):
            d[f"param.{k}"] = self.params[k]
        return d

    @classmethod
    def from_echo(cls, pairs, **execution):
        kw, params = {}, {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for k, v in pairs.items():
            if k.startswith("param."):
                params[k[6:]] = _scalar(v)
            elif k in types:
                kw[k] = _coerce(k, v)
        kw.update(execution)
        return cls(params=params, **kw)

    @classmethod
    def from_report(cls, path, **execution):
        """Rebuild the config from the echo block of a CSV or JSON report."""
        with open(path) as fh:
            text = fh.read()
        if text.lstrip().startswith("{"):
            return cls.from_echo(json.loads(text)["config"], **execution)
        pairs = {}
        for line in text.splitlines():
            if not line.startswith("# "):
                break
            k, _, v = line[2:].partition("=")
            pairs[k.strip()] = v.strip()
        pairs.pop("status", None)
        return cls.from_echo(pairs, **execution)

    @classmethod
    def from_toml(cls, path, **overrides):
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        params = dict(data.pop("params", {}))
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(params=params, **data)


_INT = ("paths", "seed", "workers")
_FLOAT = ("T", "dt", "horizon", "lam", "s0")


def _coerce(k, v):
    if k in _INT:
        return int(v)
    if k in _FLOAT:
        return float(v)
    return None if v in ("None", "") and k == "out" else v


def _scalar(v):
    if not isinstance(v, str):
        return v
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    if v in ("True", "False", "true", "false"):
        return v.lower() == "true"
    return v


def parse_point(text):
    try:
        return np.array([float(t) for t in str(text).split(",")])
    except ValueError:
        raise ConfigError(f"bad point {text!r}") from None


def _numbers(text, n, name):
    try:
        vals = [float(t) for t in text.split(",")] if text else []
    except ValueError:
        raise ConfigError(f"{name} expects numbers, got {text!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{name} expects {n} numbers, got {text!r}")
    return vals


def build_base(config: ExperimentConfig):
    m = config.dimension
    return geo.Euclidean(m) if config.model.startswith("e") else geo.HyperbolicSpace(m)


def build_curve(config: ExperimentConfig):
    """MetricCurve for the perturbation spec (constant curve for `none`)."""
    return parse_curve(config.perturbation, config.dimension, config.model)


def parse_curve(spec, m=2, model="h2"):
    spec = spec.strip()
    base = "euclidean" if model.startswith("e") else "hyperbolic"
    kind, _, args = spec.partition(":")
    if kind == "none":
        return geo.ConstantCurve(geo.Euclidean(m) if base == "euclidean" else geo.HyperbolicSpace(m))
    if kind == "bump":
        vals = _numbers(args, m + 2, "bump")
        phi = geo.RadialBump(tuple(vals[:m]), vals[m], vals[m + 1], flat=base == "euclidean")
        return geo.ConformalCurve(phi, m, base)
    if kind == "zero-mean":
        if m != 2 or base != "hyperbolic":
            raise ConfigError("zero-mean bumps are exact on H^2 only")
        vals = _numbers(args, m + 3, "zero-mean")
        phi = geo.zero_mean_bump(tuple(vals[:m]), vals[m], vals[m + 1], vals[m + 2])
        return geo.ConformalCurve(phi, m, base, volume_preserving=True)
    if kind == "scaling":
        (c,) = _numbers(args, 1, "scaling")
        return geo.scaling_curve(c, m)
    if kind == "sum":
        from ..variation.fields import CurveSum

        parts = [parse_curve(p, m, model) for p in args.split(";")]
        return CurveSum(parts, [1.0] * len(parts))
    raise ConfigError(f"unknown perturbation {spec!r}")


def build_model(config: ExperimentConfig, lam=1.0):
    """The perturbed model g^lam (lam = 1 by default) or the base for `none`."""
    curve = build_curve(config)
    return curve.model(lam) if config.perturbation != "none" else curve.base
