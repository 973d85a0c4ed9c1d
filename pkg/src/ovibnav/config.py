"""Experiment configuration: one JSON document with a section per concern."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import LinkParams
from .dataset import ConfigError, WorldConfig
from .locedge import HybridConfig
from .ovib import DEFAULT_PRUNE_THRESHOLD, Schedule

DEFAULTS = {
    "seed": 0,
    "out_dir": "runs/default",
    "frame_rate_hz": 10.0,
    "world": WorldConfig().to_dict(),
    "model": {"k": 32, "alpha_loc": 0.01, "beta": 0.01, "gamma": 0.01, "init_logvar": -6.0},
    "schedule": {"epochs": 30, "batch_size": 64, "lr": 1e-3},
    "prune": {"threshold_logalpha": DEFAULT_PRUNE_THRESHOLD},
    "quantizer": {"enabled": True, "bits": 8},
    "hybrid": {"eta_mode": "fixed", "eta": 0.5, "adaptive_scale": 1.0, "k_neighbors": 4},
    "link": {
        "params": LinkParams().to_dict(),
        "distances_m": [50.0, 100.0, 200.0],
        "trials": 1000,
        "bottlenecks_KBps": [4.0, 8.0, 12.0],
        "encode_s": 0.0,
        "decode_s": 0.0,
    },
    "sweeps": {
        "beta": [float(b) for b in np.logspace(-2, 1, 6)],
        "gamma": [0.01, 0.04],
        "k": [32, 128],
        "rate_grid": [[8, 4], [16, 8], [32, 8], [64, 8]],
        "rate_k_neighbors": 1,
    },
}


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, v in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(base[key], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path}{key} must be an object")
            out[key] = _merge(base[key], v, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, d: dict | None = None, **overrides) -> "ExperimentConfig":
        raw = _merge(DEFAULTS, d or {})
        for key, v in overrides.items():
            if v is not None:
                raw[key] = v
        return cls(raw)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(d, **overrides)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n")

    def validate(self):
        r = self.raw
        try:
            self.world.validate()
            self.schedule.validate()
            self.hybrid
            self.link_params
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        m = r["model"]
        if int(m["k"]) < 1:
            raise ConfigError("model.k must be >= 1")
        if min(m["alpha_loc"], m["beta"], m["gamma"]) < 0:
            raise ConfigError("loss weights must be non-negative")
        if not 1 <= int(r["quantizer"]["bits"]) <= 16:
            raise ConfigError("quantizer.bits must be in [1, 16]")
        if not r["frame_rate_hz"] > 0:
            raise ConfigError("frame_rate_hz must be positive")
        s = r["sweeps"]
        for key in ("beta", "gamma", "k", "rate_grid"):
            if not s[key]:
                raise ConfigError(f"sweeps.{key} must be non-empty")
        if not r["link"]["bottlenecks_KBps"]:
            raise ConfigError("link.bottlenecks_KBps must be non-empty")
        if int(r["link"]["trials"]) < 1:
            raise ConfigError("link.trials must be >= 1")

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out_dir"])

    @property
    def world(self) -> WorldConfig:
        return WorldConfig.from_dict(self.raw["world"])

    @property
    def schedule(self) -> Schedule:
        return Schedule(**self.raw["schedule"])

    @property
    def hybrid(self) -> HybridConfig:
        return HybridConfig(**self.raw["hybrid"])

    @property
    def link_params(self) -> LinkParams:
        return LinkParams.from_dict(self.raw["link"]["params"])

    @property
    def bits(self) -> int | None:
        q = self.raw["quantizer"]
        return int(q["bits"]) if q["enabled"] else None

    def with_(self, **sections) -> "ExperimentConfig":
        """Copy with some sections (or top-level keys) partially overridden."""
        return ExperimentConfig(_merge(self.raw, sections))
