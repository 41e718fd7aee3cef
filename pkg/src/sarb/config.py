"""Experiment configuration: defaults, key=value files, and hashing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .data import DatasetSpec


class ConfigError(ValueError):
    """Invalid or contradictory configuration (CLI exit code 2)."""


def _default_proportions():
    return tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class TrainConfig:
    # dataset geometry (ignored when a dataset is supplied externally)
    n_samples: int = 2000
    n_categories: int = 10
    height: int = 4
    width: int = 4
    depth: int = 16
    positives_min: int = 1
    positives_max: int = 3
    snr: float = 5.0
    eval_fraction: float = 0.25
    stratified: bool = False
    # schedule
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-5
    weight_decay: float = 5e-4
    lr_decay_every: int = 10
    lr_decay_factor: float = 10.0
    blend_start_epoch: int = 5
    proto_refresh: int = 5
    k_prototypes: int = 4
    contrastive_weight: float = 0.05
    # modules
    ilrb: bool = True
    plrb: bool = True
    alpha_fixed: float | None = None
    beta_fixed: float | None = None
    blend_lr: float | None = None  # None: coefficients follow lr
    alpha_shared: bool = False
    contrastive_policy: str = "known-only"
    baseline: str = "none"  # none | ip-mixup | fm-mixup
    mix_alpha: float = 1.0
    # evaluation and sweeps
    threshold: float = 0.5
    proportions: tuple = field(default_factory=_default_proportions)
    seeds: tuple = (0, 1, 2)

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.lr_decay_every < 1 or self.lr_decay_factor <= 0:
            raise ConfigError("lr decay schedule must be positive")
        if self.blend_start_epoch < 0 or self.proto_refresh < 1:
            raise ConfigError("blend/refresh schedule must be positive")
        if self.k_prototypes < 1:
            raise ConfigError("k_prototypes must be at least 1")
        for name in ("alpha_fixed", "beta_fixed"):
            value = getattr(self, name)
            if value is not None and not (0.0 < value <= 1.0):
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        if self.blend_lr is not None and self.blend_lr < 0:
            raise ConfigError("blend_lr must be non-negative")
        if self.contrastive_policy not in ("known-only", "literal"):
            raise ConfigError(f"unknown contrastive policy {self.contrastive_policy!r}")
        if self.baseline not in ("none", "ip-mixup", "fm-mixup"):
            raise ConfigError(f"unknown baseline mode {self.baseline!r}")
        if self.mix_alpha <= 0:
            raise ConfigError("mix_alpha must be positive")
        if not (0.0 < self.eval_fraction < 1.0):
            raise ConfigError("eval_fraction must lie in (0, 1)")
        if not self.proportions or any(not (0.0 < p <= 1.0) for p in self.proportions):
            raise ConfigError("proportions must be a non-empty subset of (0, 1]")
        if not self.seeds or any(int(s) < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        try:
            self.dataset_spec(seed=0).validate()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        return self

    def dataset_spec(self, seed: int) -> DatasetSpec:
        return DatasetSpec(
            n_samples=self.n_samples, n_categories=self.n_categories,
            height=self.height, width=self.width, depth=self.depth,
            positives_min=self.positives_min, positives_max=self.positives_max,
            snr=self.snr, seed=seed,
        )

    def lr_at(self, epoch: int) -> float:
        return self.lr / self.lr_decay_factor ** (epoch // self.lr_decay_every)

    def normalized(self) -> str:
        parts = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (tuple, list)):
                value = ",".join(repr(v) for v in value)
            parts.append(f"{f.name}={value!r}")
        return ";".join(parts)

    def hash(self) -> str:
        return hashlib.sha256(self.normalized().encode()).hexdigest()[:16]


_BOOL_VALUES = {"on": True, "off": False, "true": True, "false": False,
                "1": True, "0": False, "yes": True, "no": False}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    for f in fields(TrainConfig):
        if f.name != name:
            continue
        current = getattr(TrainConfig(), f.name)
        if isinstance(current, bool):
            if raw.lower() not in _BOOL_VALUES:
                raise ConfigError(f"{name}: expected on/off, got {raw!r}")
            return _BOOL_VALUES[raw.lower()]
        if isinstance(current, int):
            return int(raw)
        if current is None:
            return None if raw.lower() in ("none", "") else float(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            items = [x for x in raw.split(",") if x.strip()]
            if name == "seeds":
                return tuple(int(x) for x in items)
            return tuple(float(x) for x in items)
        return raw
    raise ConfigError(f"unknown config key {name!r}")


def load_config_file(path) -> dict:
    """Parse a flat key=value file (one pair per line, # comments)."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            overrides[key.strip()] = _parse_value(key.strip(), value)
    return overrides


def make_config(file=None, **overrides) -> TrainConfig:
    """Defaults, overlaid by a config file, overlaid by explicit overrides."""
    merged = {}
    if file is not None:
        merged.update(load_config_file(file))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    valid = {f.name for f in fields(TrainConfig)}
    unknown = set(merged) - valid
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**merged).validate()


def with_overrides(config: TrainConfig, **overrides) -> TrainConfig:
    return replace(config, **overrides).validate()
