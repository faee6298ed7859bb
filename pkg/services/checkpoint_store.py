"""
DeVigNet Checkpoint Store
Directory checkpoints: weights.bin (flat named float32 records) + config.json
+ meta.json, with an optional optimizer.pt for resumable training
"""

import copy
import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch
from pydantic import ValidationError

from config import LIBRARY_VERSION, ModelConfig
from network.model import DeVigNet
from utils.errors import CheckpointError
from utils.logging_utils import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

MAGIC = b"DVGN"
FORMAT_VERSION = 1
WEIGHTS_FILE = "weights.bin"
CONFIG_FILE = "config.json"
META_FILE = "meta.json"
OPTIMIZER_FILE = "optimizer.pt"

_HEADER = struct.Struct("<4sII")  # magic, format version, record count
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_DIM = struct.Struct("<I")


@dataclass
class Checkpoint:
    weights: "OrderedDict[str, torch.Tensor]"
    config: ModelConfig
    step: int = 0
    metrics_snapshot: Optional[Dict[str, Any]] = None
    optimizer_state: Optional[Dict[str, Any]] = field(default=None, repr=False)

    @classmethod
    def from_model(cls, model: DeVigNet, step: int = 0, optimizer: Optional[torch.optim.Optimizer] = None,
                   metrics_snapshot: Optional[Dict[str, Any]] = None) -> "Checkpoint":
        weights = OrderedDict((k, v.detach().cpu().clone()) for k, v in model.state_dict().items())
        return cls(
            weights=weights,
            config=model.cfg,
            step=step,
            metrics_snapshot=metrics_snapshot,
            optimizer_state=copy.deepcopy(optimizer.state_dict()) if optimizer is not None else None,
        )

    def build_model(self, device: Union[str, torch.device] = "cpu") -> DeVigNet:
        model = DeVigNet(self.config)
        try:
            model.load_state_dict(self.weights, strict=True)
        except RuntimeError as e:
            raise CheckpointError(f"weights do not fit the stored config: {e}") from e
        return model.to(device)


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def encode_weights(weights: Dict[str, torch.Tensor]) -> bytes:
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(weights))]
    for name, tensor in weights.items():
        encoded = name.encode("utf-8")
        chunks.append(_NAME_LEN.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_NDIM.pack(tensor.dim()))
        for dim in tensor.shape:
            chunks.append(_DIM.pack(dim))
        data = tensor.detach().cpu().to(torch.float32).contiguous().numpy()
        chunks.append(data.astype("<f4", copy=False).tobytes(order="C"))
    return b"".join(chunks)


def decode_weights(blob: bytes, source: str = WEIGHTS_FILE) -> "OrderedDict[str, torch.Tensor]":
    def take(fmt: struct.Struct, offset: int):
        if offset + fmt.size > len(blob):
            raise CheckpointError(f"{source} is truncated at byte {offset}")
        return fmt.unpack_from(blob, offset), offset + fmt.size

    (magic, version, count), offset = take(_HEADER, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{source} is not a DeVigNet weights file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source} has format version {version}, this library reads {FORMAT_VERSION}")

    weights: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for _ in range(count):
        (name_len,), offset = take(_NAME_LEN, offset)
        if offset + name_len > len(blob):
            raise CheckpointError(f"{source} is truncated inside a parameter name")
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,), offset = take(_NDIM, offset)
        shape = []
        for _ in range(ndim):
            (dim,), offset = take(_DIM, offset)
            shape.append(dim)
        n_bytes = int(np.prod(shape, dtype=np.int64)) * 4
        if offset + n_bytes > len(blob):
            raise CheckpointError(f"{source} is truncated inside parameter {name}")
        data = np.frombuffer(blob, dtype="<f4", count=n_bytes // 4, offset=offset).reshape(shape)
        weights[name] = torch.from_numpy(data.astype(np.float32))
        offset += n_bytes
    if offset != len(blob):
        raise CheckpointError(f"{source} has {len(blob) - offset} trailing bytes")
    return weights


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        blob = encode_weights(ckpt.weights)
        (path / WEIGHTS_FILE).write_bytes(blob)

        with open(path / CONFIG_FILE, "w") as f:
            json.dump(ckpt.config.model_dump(mode="json"), f, indent=2, sort_keys=True)

        meta = {
            "step": ckpt.step,
            "library_version": LIBRARY_VERSION,
            "format_version": FORMAT_VERSION,
            "config_sha256": ckpt.config.config_hash(),
            "weights_sha256": _sha256_bytes(blob),
            "metrics": ckpt.metrics_snapshot,
            "saved_at": datetime.now(timezone.utc).isoformat(),
        }
        with open(path / META_FILE, "w") as f:
            json.dump(meta, f, indent=2)

        optimizer_path = path / OPTIMIZER_FILE
        if ckpt.optimizer_state is not None:
            torch.save(ckpt.optimizer_state, optimizer_path)
        elif optimizer_path.exists():
            optimizer_path.unlink()
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint to {path}: {e}") from e

    logger.info(f"Saved checkpoint step={ckpt.step} to {path}")
    return path


def _read_json(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise CheckpointError(f"checkpoint file missing: {path}")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint file {path}: {e}") from e


def load_checkpoint(path: PathLike, expected_config: Optional[ModelConfig] = None,
                    load_optimizer: bool = True) -> Checkpoint:
    path = Path(path)
    if not path.is_dir():
        raise CheckpointError(f"checkpoint directory not found: {path}")

    meta = _read_json(path / META_FILE)
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {meta.get('format_version')}, "
            f"this library reads {FORMAT_VERSION}"
        )

    try:
        config = ModelConfig.model_validate(_read_json(path / CONFIG_FILE))
    except ValidationError as e:
        raise CheckpointError(f"checkpoint {path} has an invalid config: {e}") from e
    if config.config_hash() != meta.get("config_sha256"):
        raise CheckpointError(f"checkpoint {path}: config hash does not match meta.json")
    if expected_config is not None and expected_config.config_hash() != config.config_hash():
        raise CheckpointError(f"checkpoint {path} was written for a different model config")

    weights_path = path / WEIGHTS_FILE
    if not weights_path.is_file():
        raise CheckpointError(f"checkpoint file missing: {weights_path}")
    blob = weights_path.read_bytes()
    if _sha256_bytes(blob) != meta.get("weights_sha256"):
        raise CheckpointError(f"checkpoint {path}: weights checksum mismatch, file is corrupt")
    weights = decode_weights(blob, source=str(weights_path))

    optimizer_state = None
    optimizer_path = path / OPTIMIZER_FILE
    if load_optimizer and optimizer_path.is_file():
        try:
            optimizer_state = torch.load(optimizer_path, map_location="cpu")
        except Exception as e:
            raise CheckpointError(f"cannot read optimizer state {optimizer_path}: {e}") from e

    logger.info(f"Loaded checkpoint step={meta.get('step')} from {path}")
    return Checkpoint(
        weights=weights,
        config=config,
        step=int(meta.get("step", 0)),
        metrics_snapshot=meta.get("metrics"),
        optimizer_state=optimizer_state,
    )
