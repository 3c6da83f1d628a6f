"""Planner configuration: JSON document, flag overrides, stable hashing.

Precedence is flags > config file > defaults. The resolved document is
hashed (sha256 of its canonical JSON) and that hash is stamped into
every output so a manifest can be reproduced byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .dispatch import PenaltyWeights
from .errors import InputError
from .miga import GaConfig

ENV_CONFIG = "EVGRIDPLAN_CONFIG"

# paper-reported GA parameters are the defaults; desk fixtures override
GA_DEFAULTS = dict(
    pop_size=2000,
    max_gen=400,
    pc=0.9,
    pm=0.1,
    laplace_a=0.0,
    laplace_b_real=0.15,
    laplace_b_int=0.35,
    pm_index_real=10.0,
    pm_index_int=4.0,
    elite_count=1,
    seed=0,
)

DEFAULTS: dict[str, Any] = {
    "paths": {
        "case": None,
        "nodes": None,
        "links": None,
        "stations": None,
        "trips": None,
        "station_bus_map": None,
        "fleet": None,
    },
    "ev_fraction": 1.0,
    "factor": 0.8,
    "station_filter_n": 20,
    "step_min": 60,
    "seed": 0,
    "workers": 1,
    "gravity": 9.81,
    "regen_efficiency": 0.0,
    "pf_tol": 1e-8,
    "pf_max_iter": 20,
    "ga": dict(GA_DEFAULTS),
    "penalty": {"voltage": 1e6, "slack": 1e4, "divergence": 1e9},
    "station_bus_range": None,
    "fixed_dispatch": None,
    "feedback_iterations": 1,
    "feedback_mode": "replace",
    "figures": True,
    "output_dir": "out",
}


@dataclass(frozen=True)
class PlannerConfig:
    raw: dict = field(repr=False)

    @property
    def paths(self) -> dict:
        return self.raw["paths"]

    def path(self, key: str, required: bool = True) -> Path | None:
        value = self.raw["paths"].get(key)
        if value is None:
            if required:
                raise InputError(f"config is missing paths.{key}")
            return None
        p = Path(value)
        if not p.exists():
            raise InputError(f"paths.{key}: file not found: {p}")
        return p

    def __getattr__(self, name: str):
        try:
            return self.raw[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def ga_config(self, **overrides) -> GaConfig:
        merged = {**self.raw["ga"], **{k: v for k, v in overrides.items() if v is not None}}
        return GaConfig(**merged)

    def penalty_weights(self) -> PenaltyWeights:
        return PenaltyWeights(**self.raw["penalty"])

    def config_hash(self) -> str:
        # exclude keys that cannot change the numbers: where outputs go,
        # how many workers compute them, whether figures are rendered
        semantic = {
            k: v for k, v in self.raw.items() if k not in ("output_dir", "workers", "figures")
        }
        return hash_dict(semantic)

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)


def hash_dict(d: dict) -> str:
    canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        elif value is not None:
            out[key] = value
    return out


def load_config(
    path: str | Path | None = None, overrides: dict | None = None
) -> PlannerConfig:
    """Resolve defaults <- config file <- overrides into one document.

    With no explicit path the EVGRIDPLAN_CONFIG environment variable is
    consulted; overrides with value None are ignored.
    """
    if path is None:
        env = os.environ.get(ENV_CONFIG)
        path = Path(env) if env else None
    document = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise InputError(f"config file not found: {p}")
        try:
            loaded = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        document = _deep_merge(document, loaded)
    if overrides:
        document = _deep_merge(document, overrides)
    return PlannerConfig(raw=document)
