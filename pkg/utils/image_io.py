"""
DeVigNet Image I/O
Decoding, encoding and validation of RGB images in the float [0,1] HxWx3
convention, plus tensor conversion helpers
"""

import io
from pathlib import Path
from typing import Tuple, Union

import cv2
import numpy as np
import torch
from PIL import Image as PILImage, UnidentifiedImageError

from utils.errors import DataError, StructuralError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MIN_SIDE = 8

PathLike = Union[str, Path]


def read_image(path: PathLike) -> np.ndarray:
    """Decode to float32 RGB in [0,1], shape (H, W, 3)"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image not found: {path}")
    try:
        with PILImage.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise DataError(f"cannot decode image {path}: {e}") from e
    return arr.astype(np.float32) / 255.0


def quantize_8bit(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize_8bit(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float32) / 255.0


def roundtrip_8bit(img: np.ndarray) -> np.ndarray:
    """What a PNG write/read cycle does to the image"""
    return dequantize_8bit(quantize_8bit(img))


def write_image(path: PathLike, img: np.ndarray) -> Path:
    """Encode as 8-bit PNG (round(x * 255)), creating parent directories"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        PILImage.fromarray(quantize_8bit(img), mode="RGB").save(path, format="PNG")
    except OSError as e:
        raise DataError(f"cannot write image {path}: {e}") from e
    return path


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise StructuralError(f"{name} must be HxWx3, got shape {img.shape}")
    height, width = img.shape[:2]
    if height < MIN_SIDE or width < MIN_SIDE:
        raise StructuralError(f"{name} is {height}x{width}, sides must be >= {MIN_SIDE}")
    if not np.all(np.isfinite(img)):
        raise StructuralError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise StructuralError(f"{name} values must lie in [0, 1]")
    return img


def image_to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32,
                    device: Union[str, torch.device] = "cpu") -> torch.Tensor:
    """(H, W, 3) array -> (1, 3, H, W) tensor"""
    chw = np.ascontiguousarray(img.transpose(2, 0, 1))
    return torch.from_numpy(chw).to(dtype=dtype, device=device).unsqueeze(0)


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) tensor -> float32 (H, W, 3) array"""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise StructuralError(f"expected a single-image batch, got {tuple(t.shape)}")
        t = t[0]
    return t.detach().cpu().permute(1, 2, 0).numpy().astype(np.float32)


def resize_image(img: np.ndarray, size: Union[int, Tuple[int, int]]) -> np.ndarray:
    """Bilinear resize; an int size means a square output"""
    if isinstance(size, int):
        size = (size, size)
    height, width = size
    if img.shape[:2] == (height, width):
        return img
    out = cv2.resize(img.astype(np.float32), (width, height), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0)


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 8) -> np.ndarray:
    """Horizontal grid [left | gap | right] on a white background"""
    if left.shape != right.shape:
        raise StructuralError(f"grid members differ: {left.shape} vs {right.shape}")
    height, width = left.shape[:2]
    grid = np.ones((height, 2 * width + gap, 3), dtype=np.float32)
    grid[:, :width] = left
    grid[:, width + gap:] = right
    return grid


def list_images(directory: PathLike):
    directory = Path(directory)
    return sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def decode_image_bytes(data: bytes, name: str = "upload") -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise DataError(f"cannot decode image {name}: {e}") from e
    return arr.astype(np.float32) / 255.0


def encode_png_bytes(img: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    PILImage.fromarray(quantize_8bit(img), mode="RGB").save(buffer, format="PNG")
    return buffer.getvalue()
