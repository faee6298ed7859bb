"""
DeVigNet Dataset Service
Synthetic vignetting pairs (parametric radial gain over procedural textures)
and loading of paired vignetting / vignetting-free directories
"""

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import cv2
import numpy as np
import torch
from pydantic import BaseModel, field_validator, model_validator
from torch.utils.data import Dataset

from utils.errors import DataError
from utils.image_io import (
    dequantize_8bit, image_to_tensor, list_images, quantize_8bit, read_image,
    resize_image, write_image,
)
from utils.logging_utils import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

CENTER_RANGE = (0.35, 0.65)
COS4_F_RANGE = (0.6, 1.4)
POLY_RANGES = {"a": (0.5, 2.0), "b": (0.0, 1.0), "c": (0.0, 0.5)}

# (input, target) directory names, first match wins
PAIR_DIR_NAMES = (("input", "target"), ("low", "high"), ("low", "normal"))
MANIFEST_NAME = "manifest.json"


class VignetteModel(str, Enum):
    COS4 = "cos4"
    POLYNOMIAL = "polynomial"


class VignetteProfile(BaseModel):
    center: Tuple[float, float] = (0.5, 0.5)
    model: VignetteModel = VignetteModel.COS4
    params: Dict[str, float] = {"f": 1.0}

    @field_validator("center")
    @classmethod
    def _center_in_unit_square(cls, v):
        if not all(0.0 <= c <= 1.0 for c in v):
            raise ValueError(f"center must lie in [0,1]^2, got {v}")
        return v

    @model_validator(mode="after")
    def _params_match_model(self):
        if self.model == VignetteModel.COS4:
            if set(self.params) != {"f"} or self.params["f"] < 0:
                raise ValueError("cos4 profiles take a single non-negative 'f'")
        else:
            if set(self.params) != {"a", "b", "c"}:
                raise ValueError("polynomial profiles take 'a', 'b' and 'c'")
            if any(self.params[k] < 0 for k in ("a", "b", "c")):
                raise ValueError("polynomial coefficients must be >= 0")
        return self

    def radius(self, height: int, width: int) -> np.ndarray:
        """Distance from the optical center, normalized so the farthest corner is 1"""
        cy = self.center[1] * (height - 1)
        cx = self.center[0] * (width - 1)
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        dist = np.hypot(ys - cy, xs - cx)
        corners = [np.hypot(y - cy, x - cx) for y in (0, height - 1) for x in (0, width - 1)]
        farthest = max(corners)
        if farthest == 0.0:
            return np.zeros_like(dist)
        return dist / farthest

    def gain_at(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if self.model == VignetteModel.COS4:
            # cos^4(arctan(r f)) == 1 / (1 + (r f)^2)^2
            rf = r * self.params["f"]
            return 1.0 / (1.0 + rf * rf) ** 2
        r2 = r * r
        p = self.params
        return 1.0 / (1.0 + p["a"] * r2 + p["b"] * r2 ** 2 + p["c"] * r2 ** 3)

    def gain(self, height: int, width: int) -> np.ndarray:
        return self.gain_at(self.radius(height, width))


def sample_profile(rng_seed: int) -> VignetteProfile:
    rng = np.random.default_rng(rng_seed)
    model = VignetteModel.COS4 if rng.integers(0, 2) == 0 else VignetteModel.POLYNOMIAL
    center = tuple(float(c) for c in rng.uniform(*CENTER_RANGE, size=2))
    if model == VignetteModel.COS4:
        params = {"f": float(rng.uniform(*COS4_F_RANGE))}
    else:
        params = {k: float(rng.uniform(*POLY_RANGES[k])) for k in ("a", "b", "c")}
    return VignetteProfile(center=center, model=model, params=params)


def apply_vignette(img: np.ndarray, profile: VignetteProfile, clamp: bool = True) -> np.ndarray:
    """Per-pixel multiply by the radial gain"""
    height, width = img.shape[:2]
    out = img.astype(np.float64) * profile.gain(height, width)[..., None]
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out.astype(img.dtype) if np.issubdtype(img.dtype, np.floating) else out


# Procedural clean images

def _gradient(rng: np.random.Generator, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    t = np.cos(angle) * xs + np.sin(angle) * ys
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    start, end = rng.uniform(0.2, 1.0, size=3), rng.uniform(0.2, 1.0, size=3)
    return start * (1 - t[..., None]) + end * t[..., None]


def _checker_blend(rng: np.random.Generator, size: int) -> np.ndarray:
    cells = int(rng.integers(4, 17))
    ys, xs = np.mgrid[0:size, 0:size]
    board = ((ys * cells // size + xs * cells // size) % 2).astype(np.float64)
    board = cv2.GaussianBlur(board, (0, 0), sigmaX=float(rng.uniform(0.5, 2.5)))
    light, dark = rng.uniform(0.6, 1.0, size=3), rng.uniform(0.1, 0.5, size=3)
    mix = board[..., None] * light + (1 - board[..., None]) * dark
    return 0.7 * mix + 0.3 * _gradient(rng, size)


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    noise = rng.uniform(0.0, 1.0, size=(size, size, 3))
    field = cv2.GaussianBlur(noise, (0, 0), sigmaX=float(rng.uniform(size / 32, size / 8)))
    lo, hi = field.min(axis=(0, 1)), field.max(axis=(0, 1))
    field = (field - lo) / np.maximum(hi - lo, 1e-12)
    return 0.15 + 0.8 * field


TEXTURES = (_gradient, _checker_blend, _smooth_field)


def procedural_texture(seed: int, index: int, size: int) -> np.ndarray:
    rng = np.random.default_rng([seed, index, 1])
    texture = TEXTURES[int(rng.integers(0, len(TEXTURES)))](rng, size)
    return np.clip(texture, 0.0, 1.0)


def make_synthetic_dataset(n: int, size: int, seed: int, out_dir: PathLike,
                           clean_dir: Optional[PathLike] = None) -> Path:
    """Write input/xxxx.png (vignetted) and target/xxxx.png (clean) pairs plus a manifest"""
    if n < 1 or size < 8:
        raise DataError(f"need n >= 1 and size >= 8, got n={n} size={size}")
    out_dir = Path(out_dir)
    try:
        (out_dir / "input").mkdir(parents=True, exist_ok=True)
        (out_dir / "target").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create dataset directory {out_dir}: {e}") from e

    sources: List[Path] = []
    if clean_dir is not None:
        sources = list_images(clean_dir)
        if not sources:
            raise DataError(f"no clean images found in {clean_dir}")

    manifest = []
    for index in range(n):
        sample_id = f"{index:04d}"
        if sources:
            clean = resize_image(read_image(sources[index % len(sources)]), size)
        else:
            clean = procedural_texture(seed, index, size)
        # gain applied to the quantized target keeps input <= target after rounding
        target = dequantize_8bit(quantize_8bit(clean))
        profile = sample_profile(int(np.random.default_rng([seed, index, 2]).integers(0, 2 ** 31)))
        vignetted = apply_vignette(target.astype(np.float64), profile)

        write_image(out_dir / "target" / f"{sample_id}.png", target)
        write_image(out_dir / "input" / f"{sample_id}.png", vignetted)
        manifest.append({
            "id": sample_id,
            "model": profile.model.value,
            "center": list(profile.center),
            "params": profile.params,
        })

    with open(out_dir / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=2)
    logger.info(f"Wrote {n} synthetic pairs ({size}x{size}) to {out_dir}")
    return out_dir


# Paired loading

@dataclass
class PairedSample:
    input: np.ndarray
    target: np.ndarray
    id: str

    def __post_init__(self):
        if self.input.shape != self.target.shape:
            raise DataError(f"pair {self.id}: input {self.input.shape} and target {self.target.shape} differ")

    def to_tensors(self, device: Union[str, torch.device] = "cpu") -> Tuple[torch.Tensor, torch.Tensor]:
        return image_to_tensor(self.input, device=device), image_to_tensor(self.target, device=device)


def resolve_pair_dirs(path: PathLike, split: Optional[str] = None) -> Tuple[Path, Path]:
    """Find (input_dir, target_dir) under <path>/<split> or <path>"""
    root = Path(path)
    bases = [root / split, root] if split else [root]
    for base in bases:
        for input_name, target_name in PAIR_DIR_NAMES:
            if (base / input_name).is_dir() and (base / target_name).is_dir():
                return base / input_name, base / target_name
    raise DataError(f"no paired input/target directories under {root} (split={split})")


class PairedImageDataset(Dataset):
    """Filename-sorted aligned pairs; crop and resize are applied to both members"""

    def __init__(self, input_dir: Path, target_dir: Path, crop: Optional[int] = None,
                 resize: Optional[int] = None, seed: int = 0):
        self.input_dir = input_dir
        self.target_dir = target_dir
        self.crop = crop
        self.resize = resize
        self.seed = seed

        inputs = {p.stem: p for p in list_images(input_dir)}
        targets = {p.stem: p for p in list_images(target_dir)}
        missing_target = sorted(set(inputs) - set(targets))
        missing_input = sorted(set(targets) - set(inputs))
        if missing_target:
            raise DataError(f"missing target counterpart for id {missing_target[0]} in {target_dir}")
        if missing_input:
            raise DataError(f"missing input counterpart for id {missing_input[0]} in {input_dir}")

        self.ids: List[str] = sorted(inputs)
        self._inputs = inputs
        self._targets = targets

    def __len__(self) -> int:
        return len(self.ids)

    def crop_offsets(self, height: int, width: int, crop_key: int) -> Tuple[int, int]:
        rng = np.random.default_rng([self.seed, crop_key])
        top = int(rng.integers(0, height - self.crop + 1))
        left = int(rng.integers(0, width - self.crop + 1))
        return top, left

    def load(self, index: int, crop_key: Optional[int] = None) -> PairedSample:
        sample_id = self.ids[index]
        inp = read_image(self._inputs[sample_id])
        tgt = read_image(self._targets[sample_id])
        if inp.shape != tgt.shape:
            raise DataError(f"pair {sample_id}: input {inp.shape[:2]} and target {tgt.shape[:2]} sizes differ")

        if self.crop is not None:
            height, width = inp.shape[:2]
            if height < self.crop or width < self.crop:
                raise DataError(f"pair {sample_id} is {height}x{width}, smaller than crop {self.crop}")
            top, left = self.crop_offsets(height, width, index if crop_key is None else crop_key)
            inp = inp[top:top + self.crop, left:left + self.crop]
            tgt = tgt[top:top + self.crop, left:left + self.crop]

        if self.resize is not None:
            inp = resize_image(inp, self.resize)
            tgt = resize_image(tgt, self.resize)
        return PairedSample(input=np.ascontiguousarray(inp), target=np.ascontiguousarray(tgt), id=sample_id)

    def __getitem__(self, index: int) -> PairedSample:
        return self.load(index)


def load_paired_dir(path: PathLike, split: Optional[str] = "train", crop: Optional[int] = None,
                    resize: Optional[int] = None, seed: int = 0) -> PairedImageDataset:
    input_dir, target_dir = resolve_pair_dirs(path, split)
    dataset = PairedImageDataset(input_dir, target_dir, crop=crop, resize=resize, seed=seed)
    logger.info(f"Loaded {len(dataset)} pairs from {input_dir.parent} (crop={crop}, resize={resize})")
    return dataset


def read_manifest(out_dir: PathLike) -> List[Dict]:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    with open(path, "r") as f:
        return json.load(f)
