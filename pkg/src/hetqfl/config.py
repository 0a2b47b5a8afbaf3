"""Experiment configuration: a strict key-value tree read from YAML or JSON.

Unknown keys are rejected at every level and every numeric range is checked
before anything runs. `to_dict` gives the effective configuration with all
defaults filled in; feeding it back to `from_dict` yields an equal object.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

ALGORITHMS = ("qfl_fedavg", "pqfl", "wpqfl", "spqfl", "qnn_central")
STRATEGIES = ("uniform", "layerwise", "noise_aware", "fairness", "encoding_aware")
DATASET_KINDS = ("blobs", "idx", "csv")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _listify(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class DatasetSpec:
    kind: str
    n: int = 2000
    num_classes: int = 4
    dim: int = 16
    spread: float = 1.0
    seed: int = 0
    images: str | None = None
    labels: str | None = None
    path: str | None = None
    subsample: int | None = None
    reduce: str | None = None
    out_dim: int | None = None

    def validate(self, prefix: str = "dataset") -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"{prefix}.kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind == "blobs":
            _positive_int(f"{prefix}.n", self.n)
            _positive_int(f"{prefix}.num_classes", self.num_classes)
            _positive_int(f"{prefix}.dim", self.dim)
            if self.n < self.num_classes:
                raise ConfigError(f"{prefix}.n must be >= {prefix}.num_classes")
            if not self.spread >= 0:
                raise ConfigError(f"{prefix}.spread must be >= 0")
        if self.kind == "idx" and not (self.images and self.labels):
            raise ConfigError(f"{prefix}.images and {prefix}.labels are required for idx datasets")
        if self.kind == "csv" and not self.path:
            raise ConfigError(f"{prefix}.path is required for csv datasets")
        if self.subsample is not None:
            _positive_int(f"{prefix}.subsample", self.subsample)
        if self.reduce not in (None, "avgpool", "pca"):
            raise ConfigError(f"{prefix}.reduce must be avgpool, pca or null")
        if self.reduce is not None:
            if self.out_dim is None:
                raise ConfigError(f"{prefix}.out_dim is required when reduce is set")
            _positive_int(f"{prefix}.out_dim", self.out_dim)


@dataclass
class NoiseSpec:
    """Per-client noise; list values are assigned to clients round-robin."""

    enabled: bool = False
    gamma_ad: Any = 0.0
    p_pd: Any = 0.0
    t1_us: float = 50.0
    t2_us: float = 70.0
    gate_time_1q_ns: float = 50.0
    gate_time_2q_ns: float = 300.0
    shots: int | None = None

    def validate(self, prefix: str = "heterogeneity.noise") -> None:
        for name in ("gamma_ad", "p_pd"):
            for v in _listify(getattr(self, name)):
                if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                    raise ConfigError(f"{prefix}.{name} values must be in [0, 1], got {v!r}")
        for name in ("t1_us", "t2_us", "gate_time_1q_ns", "gate_time_2q_ns"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{prefix}.{name} must be > 0")
        if self.t2_us > 2 * self.t1_us:
            raise ConfigError(f"{prefix}.t2_us must not exceed 2 * t1_us")
        if self.shots is not None:
            _positive_int(f"{prefix}.shots", self.shots)


@dataclass
class HeterogeneitySpec:
    qubits: Any = 4
    depths: Any = 2
    fidelity: Any = None
    sigma_sq: Any = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def validate(self, prefix: str = "heterogeneity") -> None:
        for name in ("qubits", "depths"):
            for v in _listify(getattr(self, name)):
                _positive_int(f"{prefix}.{name}", v)
        if self.fidelity is not None:
            for v in _listify(self.fidelity):
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"{prefix}.fidelity values must be in [0, 1], got {v!r}")
        if self.sigma_sq is not None:
            for v in _listify(self.sigma_sq):
                if not v >= 0:
                    raise ConfigError(f"{prefix}.sigma_sq values must be >= 0, got {v!r}")
        self.noise.validate(f"{prefix}.noise")


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    algorithm: Any = "spqfl"
    strategy: str | None = None
    clients: int = 8
    classes_per_client: int = 2
    heterogeneity: HeterogeneitySpec = field(default_factory=HeterogeneitySpec)
    rounds: int = 50
    local_steps: int = 5
    batch_size: int = 32
    lr: float = 0.001
    lam: float = 0.1
    gamma_ns: float = 1.0
    tau: Any = "adaptive"
    alpha: float = 1.0
    optimizer: str = "sgd"
    lr_decay: float = 0.9
    decay_every: int = 10
    xi_scale: float = 1.0
    sample_cap: int = 64
    train_fraction: float = 0.8
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    out_dir: str = "runs/experiment"

    @property
    def algorithms(self) -> list[str]:
        return _listify(self.algorithm)

    def validate(self) -> "ExperimentConfig":
        self.dataset.validate()
        self.heterogeneity.validate()
        algos = self.algorithms
        if not algos:
            raise ConfigError("algorithm must name at least one algorithm")
        for a in algos:
            if a not in ALGORITHMS:
                raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {a!r}")
        if len(set(algos)) != len(algos):
            raise ConfigError("algorithm list has duplicates")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        _positive_int("clients", self.clients)
        _positive_int("classes_per_client", self.classes_per_client)
        _nonneg_int("rounds", self.rounds)
        _positive_int("local_steps", self.local_steps)
        _positive_int("batch_size", self.batch_size)
        _positive_int("decay_every", self.decay_every)
        _positive_int("sample_cap", self.sample_cap)
        if not (isinstance(self.lr, (int, float)) and self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError(f"lr must be a positive number, got {self.lr!r}")
        for name in ("lam", "gamma_ns", "xi_scale"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 0):
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")
        if not (isinstance(self.alpha, (int, float)) and self.alpha > 0):
            raise ConfigError(f"alpha must be > 0, got {self.alpha!r}")
        if isinstance(self.tau, str):
            if self.tau not in ("adaptive", "disabled"):
                raise ConfigError(f"tau must be a number in [0, 1], 'adaptive' or 'disabled', got {self.tau!r}")
        elif not (isinstance(self.tau, (int, float)) and 0.0 <= self.tau <= 1.0):
            raise ConfigError(f"tau must be in [0, 1], got {self.tau!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if self.classes_per_client > self._num_classes_hint():
            raise ConfigError("classes_per_client exceeds the number of classes")
        return self

    def _num_classes_hint(self) -> int:
        return self.dataset.num_classes if self.dataset.kind == "blobs" else 10**9

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _positive_int(name: str, v) -> None:
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"{name} must be a positive integer, got {v!r}")


def _nonneg_int(name: str, v) -> None:
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f" in {prefix}" if prefix else ""
        raise ConfigError(f"unknown key(s){where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = {"dataset": DatasetSpec, "heterogeneity": HeterogeneitySpec, "noise": NoiseSpec}.get(name)
        if sub is not None and fields[name].type in (sub.__name__, sub):
            value = _build(sub, value, f"{prefix}.{name}" if prefix else name)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from None


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict) or "dataset" not in data:
        raise ConfigError("config must be a mapping with a 'dataset' section")
    return _build(ExperimentConfig, data, "").validate()


def parse_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) config file, fill defaults and validate."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(data)


def dump_config(config: ExperimentConfig, path) -> None:
    """Write the effective configuration as JSON (also valid YAML)."""
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
