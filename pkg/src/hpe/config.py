"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key must be a field of
:class:`ScenarioConfig`; anything else is a :class:`ConfigError`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .scenarios import DEFAULT_MODE, SCENARIOS


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "gaussian_patch"
    mode: str = ""  # blank picks the scenario's default
    T_final: float = 3.0
    dt: float = 0.05
    cadence: int = 2
    method: str = "direct"
    theta: float = 0.5
    leaf_capacity: int = 16
    expansion_order: int = 6
    gamma: float = 0.5
    p: float = 1.5
    q: float = 1.5
    k: int = 3
    seed: int = 0
    threads: int = 1
    out: str = "out"
    # scenario parameters; nan means "scenario default"
    amplitude: float = math.nan
    sigma: float = math.nan
    height: float = math.nan
    separation: float = math.nan
    circulation: float = math.nan
    core: float = math.nan
    n: int = 0
    blob_h: float = math.nan
    core_factor: float = math.nan
    diag_h: float = math.nan
    probe_spacing: float = 1e-3
    file: str = ""
    # picard
    max_iters: int = 20
    tol: float = 1e-8
    window_policy: str = "paper_formula"
    fixed_T0: float = math.nan
    trial_windows: tuple = (1.0, 2.0, 4.0, 8.0)
    # bench
    bench_sizes: tuple = (1000, 10000, 100000)
    bench_direct_max: int = 100000
    # probe
    probe_samples: int = 20

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.mode not in ("", "blob", "grid"):
            raise ConfigError(f"mode must be 'blob' or 'grid', got {self.mode!r}")
        if not (self.T_final > 0.0 and math.isfinite(self.T_final)):
            raise ConfigError("T_final must be positive")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if self.cadence < 1:
            raise ConfigError("cadence must be at least one step")
        if self.method not in ("direct", "treecode"):
            raise ConfigError(f"method must be 'direct' or 'treecode', got {self.method!r}")
        if not 0.0 <= self.theta <= 1.5:
            raise ConfigError("theta must lie in [0, 1.5]")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 1.0 < self.p < 2.0:
            raise ConfigError("p must lie in (1, 2)")
        if not 1.0 <= self.q < 2.0:
            raise ConfigError("q must lie in [1, 2)")
        if self.k < 3:
            raise ConfigError("k must be at least 3")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.scenario == "from_file" and not self.file:
            raise ConfigError("scenario from_file needs 'file = <path>'")
        if self.window_policy not in ("paper_formula", "fixed"):
            raise ConfigError(f"unknown window_policy {self.window_policy!r}")

    @property
    def run_mode(self) -> str:
        return self.mode or DEFAULT_MODE[self.scenario]

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if isinstance(v, float) and math.isnan(v) else (list(v) if isinstance(v, tuple) else v)
        return out


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(float(x)) if kind is int else kind(x)
                         for x in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw, _FIELDS[key].default)
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:  # pragma: no cover - guarded by the key check
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def format_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
