"""Experiment configuration: dataclasses with JSON persistence.

A persisted config re-run with the same seed reproduces every
deterministic report number bit-for-bit on the same platform (wall-clock
timings are the one declared exception and live in their own file).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..model import ModelConfig
from ..stormdata import SyntheticStormConfig

VARIANTS = ("edl", "p-edl", "ensemble", "mc-dropout")


@dataclass
class DataConfig:
    """Either a synthetic generator config or a raw-file ingest path."""

    synthetic: SyntheticStormConfig | None = None
    ingest_path: str | None = None
    window_stride: int = 25
    split_seed: int = 0
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)

    def __post_init__(self):
        if (self.synthetic is None) == (self.ingest_path is None):
            raise ConfigError("exactly one of synthetic/ingest_path must be set")
        if self.window_stride < 1:
            raise ConfigError("window_stride must be positive")


@dataclass
class TrainingConfig:
    epochs: int = 6
    batch_size: int = 4
    learning_rate: float = 1e-3
    seed: int = 0
    grad_clip: float = 1.0
    patience: int = 5
    lambda_max: float = 0.01
    lambda_ramp_steps: int | None = None  # None -> one epoch's worth of steps
    lambda_mode: str = "linear-ramp"
    n_members: int = 10
    n_passes: int = 10
    pretrain_fraction: float = 0.5

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 < self.pretrain_fraction < 1.0:
            raise ConfigError("pretrain_fraction must lie in (0, 1)")
        if self.n_members < 2:
            raise ConfigError("n_members must be >= 2")
        if self.n_passes < 2:
            raise ConfigError("n_passes must be >= 2")


@dataclass
class ExperimentConfig:
    variant: str
    data: DataConfig
    model: ModelConfig
    training: TrainingConfig
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    # -- JSON round trip ------------------------------------------------
    def to_dict(self) -> dict:
        def encode(obj):
            if dataclasses.is_dataclass(obj):
                return {k: encode(v) for k, v in dataclasses.asdict(obj).items()}
            if isinstance(obj, tuple):
                return list(obj)
            return obj

        return {
            "variant": self.variant,
            "out_dir": self.out_dir,
            "data": encode(self.data),
            "model": encode(self.model),
            "training": encode(self.training),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            data_raw = dict(raw["data"])
            synthetic = data_raw.pop("synthetic", None)
            if synthetic is not None:
                synthetic = SyntheticStormConfig(**_tuplify(synthetic, SyntheticStormConfig))
            data = DataConfig(synthetic=synthetic, **_tuplify(data_raw, DataConfig))
            return cls(
                variant=raw["variant"],
                out_dir=raw.get("out_dir", "runs/out"),
                data=data,
                model=ModelConfig(**raw["model"]),
                training=TrainingConfig(**raw["training"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)


def _tuplify(raw: dict, cls) -> dict:
    """JSON turns tuples into lists; convert back per field type."""
    out = dict(raw)
    for f in dataclasses.fields(cls):
        if f.name in out and isinstance(out[f.name], list) and "tuple" in str(f.type):
            out[f.name] = tuple(out[f.name])
    return out
