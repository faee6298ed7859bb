"""
DeVigNet Configuration
Centralized configuration: environment-backed runtime settings plus the
model and training configuration schemas
"""
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator

load_dotenv()

LIBRARY_VERSION = "1.0.0"
DEFAULT_LOSS_LAMBDA = 0.4


@dataclass
class AppConfig:
    """Runtime settings read from the environment"""
    testing: bool = os.getenv("TESTING", "false").lower() == "true"
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    log_json: bool = os.getenv("DEVIGNET_LOG_JSON", "false").lower() == "true"
    data_directory: str = os.getenv("DATA_DIRECTORY", "./data")
    device: str = os.getenv("DEVIGNET_DEVICE", "cpu")
    serving_checkpoint: str = os.getenv("DEVIGNET_CHECKPOINT", "")

    @property
    def log_directory(self) -> Path:
        return Path(self.data_directory) / "logs"


@dataclass
class ServiceConfig:
    """Inference service settings"""
    host: str = os.getenv("DEVIGNET_HOST", "127.0.0.1")
    port: int = int(os.getenv("DEVIGNET_PORT", "8030"))
    max_upload_mb: int = int(os.getenv("DEVIGNET_MAX_UPLOAD_MB", "64"))


def seed_override() -> Optional[int]:
    """DEVIGNET_SEED, read at call time so tests can monkeypatch it"""
    raw = os.getenv("DEVIGNET_SEED")
    if raw is None or raw.strip() == "":
        return None
    return int(raw)


# Model configuration

class DaftConfig(BaseModel):
    """Low-frequency branch: cascaded fusion transformers + aggregation"""
    channels: int = 32
    patch_size: int = 4
    heads: int = 4
    mlp_ratio: float = 2.0
    block_counts: Tuple[int, ...] = (1, 2, 3, 4)
    pos_grid_size: int = 16
    enabled: bool = True

    @field_validator("block_counts")
    @classmethod
    def _fixed_block_counts(cls, v):
        if tuple(v) != (1, 2, 3, 4):
            raise ValueError("block_counts must be exactly (1, 2, 3, 4)")
        return tuple(v)

    @field_validator("patch_size")
    @classmethod
    def _patch_size(cls, v):
        if v < 2:
            raise ValueError("patch_size must be >= 2")
        return v

    @field_validator("mlp_ratio")
    @classmethod
    def _mlp_ratio(cls, v):
        if v <= 0:
            raise ValueError("mlp_ratio must be > 0")
        return v

    @model_validator(mode="after")
    def _heads_divide_channels(self):
        if self.channels <= 0 or self.heads <= 0:
            raise ValueError("channels and heads must be positive")
        if self.channels % self.heads != 0:
            raise ValueError(f"channels ({self.channels}) must be divisible by heads ({self.heads})")
        return self


class AcemConfig(BaseModel):
    """High-frequency refinement blocks"""
    channels: int = 32
    expansion: float = 2.0
    blocks_per_level: int = 2
    enabled: bool = True

    @property
    def expanded_channels(self) -> int:
        return int(round(self.expansion * self.channels))

    @model_validator(mode="after")
    def _gate_needs_even_width(self):
        if self.channels <= 0 or self.blocks_per_level < 0:
            raise ValueError("channels must be positive and blocks_per_level non-negative")
        width = self.expansion * self.channels
        if abs(width - round(width)) > 1e-9 or int(round(width)) % 2 != 0:
            raise ValueError(f"expansion * channels must be an even integer, got {width}")
        return self


class ModelConfig(BaseModel):
    pyramid_depth: int = 2
    daft: DaftConfig = Field(default_factory=DaftConfig)
    acem: AcemConfig = Field(default_factory=AcemConfig)
    hcam_alpha_init: float = 1.0
    zero_init_heads: bool = True
    seed: int = 0

    @field_validator("pyramid_depth")
    @classmethod
    def _depth(cls, v):
        if v < 1:
            raise ValueError("pyramid_depth must be >= 1")
        return v

    @field_validator("hcam_alpha_init")
    @classmethod
    def _alpha(cls, v):
        if v <= 0:
            raise ValueError("hcam_alpha_init must be > 0")
        return v

    @property
    def size_multiple(self) -> int:
        """Padded sides are multiples of this; also the minimum side length"""
        return (2 ** self.pyramid_depth) * self.daft.patch_size

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class TrainConfig(BaseModel):
    lr: float = 1e-4
    optimizer: Literal["adam"] = "adam"
    batch_size: int = 1
    steps: int = 1000
    crop: Optional[int] = 512
    loss_lambda: float = DEFAULT_LOSS_LAMBDA
    seed: int = 0
    eval_every: int = 0
    checkpoint_every: int = 0
    dataset_path: str = "./data/synthetic/train"
    val_path: Optional[str] = None
    output_dir: str = "./data/runs/default"
    num_workers: int = 0
    model: ModelConfig = Field(default_factory=ModelConfig)

    @field_validator("lr")
    @classmethod
    def _lr(cls, v):
        if v <= 0:
            raise ValueError("lr must be > 0")
        return v

    @field_validator("steps")
    @classmethod
    def _steps(cls, v):
        # 0 is the dry run: returns the initialized checkpoint
        if v < 0:
            raise ValueError("steps must be >= 0")
        return v

    @field_validator("batch_size")
    @classmethod
    def _batch(cls, v):
        if v < 1:
            raise ValueError("batch_size must be >= 1")
        return v

    @model_validator(mode="after")
    def _crop_fits_model(self):
        minimum = self.model.size_multiple
        if self.crop is not None and self.crop < minimum:
            raise ValueError(
                f"crop must be >= {minimum} (pyramid depth {self.model.pyramid_depth}, "
                f"patch size {self.model.daft.patch_size}), got {self.crop}"
            )
        return self


# Presets

TOY_MODEL_OVERRIDES: Dict[str, Any] = {
    "model.daft.channels": 16,
    "model.acem.channels": 16,
    "crop": 128,
}


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Union[List[str], Dict[str, Any]]) -> Dict[str, Any]:
    """Apply dotted key=value overrides to a raw config dict"""
    if isinstance(overrides, dict):
        items = list(overrides.items())
    else:
        items = []
        for item in overrides:
            if "=" not in item:
                raise ValueError(f"override must look like key=value, got {item!r}")
            key, raw = item.split("=", 1)
            items.append((key.strip(), _parse_override_value(raw.strip())))

    for key, value in items:
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} descends into a non-object field")
        node[parts[-1]] = value
    return data


def load_train_config(path: Optional[Union[str, Path]] = None,
                      overrides: Optional[Union[List[str], Dict[str, Any]]] = None) -> TrainConfig:
    """Load a TrainConfig from JSON, apply overrides, then DEVIGNET_SEED"""
    data: Dict[str, Any] = {}
    if path is not None:
        with open(path, "r") as f:
            data = json.load(f)
    if overrides:
        data = apply_overrides(data, overrides)

    cfg = TrainConfig.model_validate(data)
    env_seed = seed_override()
    if env_seed is not None:
        cfg = cfg.model_copy(update={
            "seed": env_seed,
            "model": cfg.model.model_copy(update={"seed": env_seed}),
        })
    return cfg


# Global configuration instances
app_config = AppConfig()
service_config = ServiceConfig()
