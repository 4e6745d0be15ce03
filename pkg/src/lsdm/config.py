"""Run configuration: JSON-backed dataclasses with strict key checking."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {sorted(unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name in data:
            value = data[name]
            if dataclasses.is_dataclass(f.type) or (isinstance(f.type, type)
                                                    and dataclasses.is_dataclass(f.type)):
                value = _from_dict(f.type, value, f"{path}.{name}")
            elif isinstance(value, dict) and name in _NESTED:
                value = _from_dict(_NESTED[name], value, f"{path}.{name}")
            kwargs[name] = value
    return cls(**kwargs)


@dataclass(frozen=True)
class SyntheticSection:
    num_users: int = 16
    weeks: int = 2
    noise_level: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1 or self.weeks < 1:
            raise ConfigError("num_users and weeks must be >= 1")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")


@dataclass(frozen=True)
class DataSection:
    synthetic: SyntheticSection | None = None
    manifest: str | None = None

    def __post_init__(self):
        if (self.synthetic is None) == (self.manifest is None):
            raise ConfigError("data section needs exactly one of 'synthetic' or 'manifest'")


@dataclass(frozen=True)
class ScheduleSection:
    kind: str = "linear"
    T_diff: int = 50
    beta_min: float = 1e-4
    beta_max: float = 0.02


@dataclass(frozen=True)
class ModelSection:
    channel_width: int = 32
    num_heads: int = 4
    blocks: int = 2
    condition_dim: int = 128
    timestep_dim: int = 128
    history_len: int = 12
    history_dim: int = 64
    env_dim: int = 32
    window_len: int = 1
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    fusion_alpha: float = 0.5
    fusion_beta: float = 0.5
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 0.1
    conditional: bool = True

    def __post_init__(self):
        if self.fusion_alpha < 0 or self.fusion_beta < 0:
            raise ConfigError("fusion weights must be non-negative")
        if min(self.lambda0, self.lambda1, self.lambda2) < 0 \
                or self.lambda0 == self.lambda1 == self.lambda2 == 0:
            raise ConfigError("loss weights must be non-negative and not all zero")


@dataclass(frozen=True)
class TrainingSection:
    epochs: int = 50
    contrastive_epochs: int = 10
    batch_size: int = 128
    contrastive_batch_size: int = 32
    contrastive_pairs: int = 512
    learning_rate: float = 1e-3
    # Fraction of training samples whose history slice is blanked so the
    # denoiser also learns to predict from the environment embedding alone.
    history_dropout: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.history_dropout < 1.0:
            raise ConfigError("history_dropout must be in [0, 1)")


@dataclass(frozen=True)
class EvaluationSection:
    steps_list: tuple[int, ...] = (10, 20, 30)
    samples: int = 8
    windows_per_user: int = 4

    def __post_init__(self):
        object.__setattr__(self, "steps_list", tuple(int(s) for s in self.steps_list))
        if any(s < 1 for s in self.steps_list) or self.samples < 1 or self.windows_per_user < 1:
            raise ConfigError("evaluation fields must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    data: DataSection = field(default_factory=lambda: DataSection(synthetic=SyntheticSection()))
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {
    "data": DataSection,
    "model": ModelSection,
    "training": TrainingSection,
    "evaluation": EvaluationSection,
    "synthetic": SyntheticSection,
    "schedule": ScheduleSection,
}


def config_from_dict(data: dict) -> RunConfig:
    return _from_dict(RunConfig, data, "config")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    config = config_from_dict(json.loads(path.read_text()))
    if config.data.manifest is not None:
        manifest = (path.parent / config.data.manifest)
        if not manifest.exists():
            raise ConfigError(f"config references missing manifest: {manifest}")
    return config


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
