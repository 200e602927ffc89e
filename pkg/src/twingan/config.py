"""Run-level configuration: JSON parsing, presets, validation.

A run config is a flat JSON object holding training hyperparameters (see
TrainConfig) plus run concerns: where data comes from, where outputs go,
and the checkpoint/log cadence. A "preset" key applies a named bundle of
architecture defaults first; explicit keys in the same file override it.
Unknown keys and invalid values raise ConfigError naming the field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .errors import ConfigError
from .model import TrainConfig

# dataset size used when training on a built-in synthetic task
SYNTHETIC_DATASET_SIZE = 200

PRESETS: dict[str, dict] = {
    # full-scale reference geometry: 256px, 8 halvings, 70-pixel critic field
    "paper256": {
        "image_size": 256,
        "channels_u": 3,
        "channels_v": 3,
        "gen_depth": 8,
        "base_width": 64,
        "disc_features": [[64, 2], [128, 2], [256, 2], [512, 1]],
        "total_generator_steps": 10000,
    },
    # desk-scale color setup
    "desk64": {
        "image_size": 64,
        "channels_u": 3,
        "channels_v": 3,
        "gen_depth": 4,
        "base_width": 32,
        "disc_features": [[32, 2], [64, 2], [128, 1]],
        "total_generator_steps": 2000,
    },
    # smallest credible setup: 32px grayscale, critic field 22
    "desk32": {
        "image_size": 32,
        "channels_u": 1,
        "channels_v": 1,
        "gen_depth": 3,
        "base_width": 16,
        "disc_features": [[16, 2], [32, 2]],
        "total_generator_steps": 2000,
        "lr": 2e-4,
    },
}

_RUN_FIELDS = {
    "data_root",
    "output_dir",
    "checkpoint_every",
    "log_every",
    "preset",
    "synthetic_task",
}
_TRAIN_FIELDS = {f.name for f in dc_fields(TrainConfig)}


@dataclass
class RunConfig:
    """Everything cmd_train needs: a TrainConfig plus run-level fields."""

    train: TrainConfig = field(default_factory=TrainConfig)
    data_root: str | None = None
    output_dir: str = "runs/out"
    checkpoint_every: int = 0  # 0: checkpoint only at the end of the run
    log_every: int = 100
    preset: str | None = None
    synthetic_task: str | None = None

    def validate(self) -> None:
        self.train.validate()
        if self.data_root is not None and not isinstance(self.data_root, str):
            raise ConfigError("data_root", "must be a string path or null")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir", "must be a non-empty string")
        for name in ("checkpoint_every", "log_every"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(name, f"must be an int, got {v!r}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every", "must be non-negative (0 = final only)")
        if self.log_every < 1:
            raise ConfigError("log_every", "must be at least 1")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(
                "preset", f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}"
            )
        if self.synthetic_task is not None and self.synthetic_task not in (
            "invert",
            "channel_swap",
        ):
            raise ConfigError("synthetic_task", "must be 'invert', 'channel_swap', or null")
        if (self.data_root is None) == (self.synthetic_task is None):
            raise ConfigError(
                "data_root", "exactly one of data_root and synthetic_task must be set"
            )
        if self.synthetic_task is not None:
            if self.train.channels_u != self.train.channels_v:
                raise ConfigError(
                    "synthetic_task", "synthetic tasks need channels_u == channels_v"
                )
            if self.synthetic_task == "channel_swap" and self.train.channels_u != 3:
                raise ConfigError("synthetic_task", "channel_swap needs 3-channel images")

    def to_dict(self) -> dict:
        d = self.train.to_dict()
        d.update(
            {
                "data_root": self.data_root,
                "output_dir": self.output_dir,
                "checkpoint_every": self.checkpoint_every,
                "log_every": self.log_every,
                "preset": self.preset,
                "synthetic_task": self.synthetic_task,
            }
        )
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a JSON object")
        unknown = set(raw) - _RUN_FIELDS - _TRAIN_FIELDS
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")

        merged: dict = {}
        preset = raw.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(
                    "preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"
                )
            merged.update(PRESETS[preset])
        merged.update({k: v for k, v in raw.items() if k != "preset"})

        train_part = {k: v for k, v in merged.items() if k in _TRAIN_FIELDS}
        run_part = {k: v for k, v in merged.items() if k in _RUN_FIELDS}
        try:
            train = TrainConfig.from_dict(train_part)
        except TypeError as e:
            raise ConfigError("config", f"bad training field types: {e}") from e
        cfg = cls(train=train, preset=preset, **run_part)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError("config", f"cannot read config file {path}: {e}") from e
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"config file is not valid JSON: {e}") from e
        return cls.from_dict(raw)
