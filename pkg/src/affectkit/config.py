"""Run configuration: YAML-backed, with dataset paths resolvable against the
AFFECTKIT_DATA environment variable."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .tasks import Task

DATA_ENV_VAR = "AFFECTKIT_DATA"

HEAD_TYPES = ("fc", "lstm")


@dataclass
class FreezeFlags:
    """Which backbone parts stay fixed during task training. The default is a
    fully frozen backbone with only the (reinitialized) head trainable."""

    backbone: bool = True
    attention: bool = True
    gdconv: bool = True

    @property
    def all_frozen(self) -> bool:
        return self.backbone and self.attention and self.gdconv


@dataclass
class DataPaths:
    root: str = ""
    train_index: str = ""
    val_index: str = ""
    images: str = "images"

    def resolve_root(self) -> Path:
        root = self.root or os.environ.get(DATA_ENV_VAR, "")
        if not root:
            raise ValueError(
                f"no dataset root: set data.root in the config or {DATA_ENV_VAR}"
            )
        return Path(root)

    def _resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.resolve_root() / p

    def train_index_path(self, task: Task) -> Path:
        return self._resolve(self.train_index or f"{task.value}.index.train.jsonl")

    def val_index_path(self, task: Task) -> Path:
        return self._resolve(self.val_index or f"{task.value}.index.val.jsonl")

    def images_dir(self) -> Path:
        return self._resolve(self.images)


@dataclass
class RunConfig:
    task: Task = Task.EXPR
    head: str = "fc"
    clip: bool = False
    backbone: object = "desk"  # preset name or dict of BackboneConfig overrides
    freeze: FreezeFlags = field(default_factory=FreezeFlags)
    optimizer: str = "adam"
    learning_rate: float = None  # None -> 1e-3 head-only, 1e-4 fine-tune
    batch_size: int = 32
    steps: int = 300
    eval_every: int = 50
    seed: int = 0
    window: int = 16
    lstm_hidden: int = 256
    va_squash: str = "tanh"
    va_range: tuple = (-1.0, 1.0)
    provider: str = "stub"
    provider_seed: int = 0
    data: DataPaths = field(default_factory=DataPaths)

    def __post_init__(self):
        self.task = Task(self.task)
        if self.head not in HEAD_TYPES:
            raise ValueError(f"head must be one of {HEAD_TYPES}, got {self.head!r}")
        if self.clip and self.task is not Task.EXPR:
            raise ValueError("the contrastive vision-language route only applies "
                             "to expression recognition")
        if isinstance(self.freeze, dict):
            self.freeze = FreezeFlags(**self.freeze)
        if isinstance(self.data, dict):
            self.data = DataPaths(**self.data)
        self.va_range = tuple(float(v) for v in self.va_range)

    def resolved_lr(self) -> float:
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return 1e-3 if self.freeze.all_frozen else 1e-4

    def architecture_label(self) -> str:
        stem = "clip" if self.clip else "mfn"
        return f"{stem}+{self.head}"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["task"] = self.task.value
        out["va_range"] = list(self.va_range)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_yaml(cls, path, **overrides) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            obj = yaml.safe_load(fh) or {}
        obj.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(obj)

    def save_yaml(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)
