"""Experiment configuration: a flat, sectioned ``key = value`` file."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .params import FracParams
from .spectral import TorusGrid


class ConfigError(ValueError):
    """Bad configuration file or value."""


# section -> key -> (parser, default)
_SCHEMA = {
    "grid": {"n": (int, 2), "N": (int, 32), "L": (float, 2 * math.pi)},
    "params": {"alpha": (float, 0.5), "beta": (float, 0.8), "T": (float, 1.0)},
    "family": {
        "seed": (int, 7),
        "count": (int, 20),
        "spectrum_slope": (float, 1.0),
        "bandwidth": (int, 6),
        "divergence_free": ("bool", False),
    },
    "suite": {"name": (str, "semigroup"), "tolerances": (float, 1.0)},
    "output": {"dir": (str, "out"), "formats": (str, "json")},
    "solver": {
        "nodes": (int, 32),
        "first_node": (float, 1e-3),
        "J_max": (int, 20),
        "tol": (float, 1e-12),
        "amplitude": (float, 0.3),
        "locate_threshold": ("bool", False),
    },
}

FORMATS = ("json", "csv", "svg")


@dataclass
class ExperimentConfig:
    grid: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    family: dict = field(default_factory=dict)
    suite: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    @property
    def torus(self) -> TorusGrid:
        return TorusGrid(self.grid["n"], self.grid["N"], self.grid["L"])

    @property
    def frac(self) -> FracParams:
        return FracParams(self.params["alpha"], self.params["beta"])

    @property
    def formats(self) -> list[str]:
        return [f.strip() for f in self.output["formats"].split(",") if f.strip()]

    def as_dict(self) -> dict:
        return {name: dict(getattr(self, name)) for name in _SCHEMA}

    def validate(self) -> "ExperimentConfig":
        try:
            self.torus
            self.frac
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.params["T"] > 0:
            raise ConfigError("params.T must be positive")
        if self.family["count"] < 1:
            raise ConfigError("family.count must be positive")
        if not 1 <= self.family["bandwidth"] < self.grid["N"] // 2:
            raise ConfigError("family.bandwidth must lie below N/2")
        if not self.suite["tolerances"] > 0:
            raise ConfigError("suite.tolerances must be positive")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ConfigError(f"unknown output format(s) {bad}; choose from {FORMATS}")
        if self.solver["nodes"] < 8:
            raise ConfigError("solver.nodes must be at least 8")
        if not 0 < self.solver["first_node"] < self.params["T"]:
            raise ConfigError("solver.first_node must lie in (0, T)")
        return self


def _convert(kind, raw: str, where: str):
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def default_config() -> ExperimentConfig:
    return ExperimentConfig(**{s: {k: d for k, (_, d) in keys.items()} for s, keys in _SCHEMA.items()}).validate()


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (N vs n)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = default_config()
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            kind, _ = _SCHEMA[section][key]
            getattr(cfg, section)[key] = _convert(kind, raw, f"{source}: {section}.{key}")
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, values in cfg.as_dict().items():
        lines.append(f"[{section}]")
        for k, v in values.items():
            lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
        lines.append("")
    return "\n".join(lines)
