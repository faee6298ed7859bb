"""
DeVigNet Evaluation Service
Per-resolution evaluation protocol: resize each pair, run the frozen model,
score PSNR (dB) / SSIM / MAE (0-255) per image, and report the Input-vs-target
baseline alongside the model row
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, Field

from config import app_config
from network.losses import mae, perceptual_metrics, psnr, ssim
from network.model import DeVigNet
from services.checkpoint_store import Checkpoint, load_checkpoint
from services.dataset_service import PairedImageDataset, load_paired_dir
from utils.image_io import image_to_tensor, roundtrip_8bit, tensor_to_image
from utils.logging_utils import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

MODEL_LABEL = "DeVigNet"
BASELINE_LABEL = "Input"
CSV_COLUMNS = ["id", "psnr_db", "ssim", "mae_255"]


class ImageMetrics(BaseModel):
    id: str
    psnr_db: float
    ssim: float
    mae_255: float
    extra: Dict[str, float] = Field(default_factory=dict)


class AggregateMetrics(BaseModel):
    psnr_db: float
    ssim: float
    mae_255: float
    extra: Dict[str, float] = Field(default_factory=dict)


class MetricsReport(BaseModel):
    label: str = MODEL_LABEL
    resolution: Optional[int] = None
    per_image: List[ImageMetrics]
    aggregate: AggregateMetrics

    @classmethod
    def from_images(cls, per_image: Sequence[ImageMetrics], label: str = MODEL_LABEL,
                    resolution: Optional[int] = None) -> "MetricsReport":
        if not per_image:
            nan = float("nan")
            aggregate = AggregateMetrics(psnr_db=nan, ssim=nan, mae_255=nan)
        else:
            extra_names = sorted({k for m in per_image for k in m.extra})
            aggregate = AggregateMetrics(
                psnr_db=float(np.mean([m.psnr_db for m in per_image])),
                ssim=float(np.mean([m.ssim for m in per_image])),
                mae_255=float(np.mean([m.mae_255 for m in per_image])),
                extra={k: float(np.mean([m.extra[k] for m in per_image if k in m.extra])) for k in extra_names},
            )
        return cls(label=label, resolution=resolution, per_image=list(per_image), aggregate=aggregate)

    def to_dict(self) -> Dict[str, Any]:
        return _encode_nonfinite(self.model_dump())

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for m in self.per_image:
            row = {"id": m.id, "psnr_db": m.psnr_db, "ssim": m.ssim, "mae_255": m.mae_255}
            row.update(m.extra)
            rows.append(row)
        extra_cols = sorted({k for m in self.per_image for k in m.extra})
        return pd.DataFrame(rows, columns=CSV_COLUMNS + extra_cols)

    def to_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsReport":
        return cls.model_validate(_decode_nonfinite(data))


class ResolutionReport(BaseModel):
    """Model row and Input baseline row at one evaluated size"""
    resolution: Optional[int] = None
    model: MetricsReport
    baseline: MetricsReport


def _encode_nonfinite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _encode_nonfinite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_encode_nonfinite(v) for v in value]
    return value


def _decode_nonfinite(value):
    if value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, dict):
        return {k: _decode_nonfinite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode_nonfinite(v) for v in value]
    return value


def score_pair(sample_id: str, output: np.ndarray, target: np.ndarray) -> ImageMetrics:
    extra = {name: float(fn(output, target)) for name, fn in perceptual_metrics().items()}
    return ImageMetrics(
        id=sample_id,
        psnr_db=psnr(output, target),
        ssim=ssim(output, target),
        mae_255=mae(output, target),
        extra=extra,
    )


def run_model(model: DeVigNet, img: np.ndarray, device: Union[str, torch.device] = "cpu") -> np.ndarray:
    """Clamped forward pass on one image, returned as float32 HxWx3"""
    param = next(model.parameters(), None)
    dtype = param.dtype if param is not None else torch.float32
    with torch.no_grad():
        out = model(image_to_tensor(img, dtype=dtype, device=device), clamp_output=True)
    return tensor_to_image(out)


def evaluate_model(model: DeVigNet, dataset: PairedImageDataset, resolution: Optional[int] = None,
                   device: Union[str, torch.device] = "cpu") -> ResolutionReport:
    """Score model and baseline rows on every pair of an already-resized dataset"""
    was_training = model.training
    model.eval()
    model_rows, baseline_rows = [], []
    try:
        for index in range(len(dataset)):
            sample = dataset[index]
            output = roundtrip_8bit(run_model(model, sample.input, device))
            model_rows.append(score_pair(sample.id, output, sample.target))
            baseline_rows.append(score_pair(sample.id, sample.input, sample.target))
    finally:
        model.train(was_training)

    report = ResolutionReport(
        resolution=resolution,
        model=MetricsReport.from_images(model_rows, label=MODEL_LABEL, resolution=resolution),
        baseline=MetricsReport.from_images(baseline_rows, label=BASELINE_LABEL, resolution=resolution),
    )
    logger.info(
        f"Evaluated {len(dataset)} pairs at {resolution or 'native'}: "
        f"psnr_db={report.model.aggregate.psnr_db:.4f} (input {report.baseline.aggregate.psnr_db:.4f}) "
        f"ssim={report.model.aggregate.ssim:.4f} mae_255={report.model.aggregate.mae_255:.4f}"
    )
    return report


def evaluate(ckpt: Union[Checkpoint, PathLike], dataset_path: PathLike,
             resolutions: Iterable[Optional[int]] = (512, 1024, 2048),
             split: Optional[str] = "test") -> List[ResolutionReport]:
    """One ResolutionReport per requested size; None means native resolution"""
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt, load_optimizer=False)
    device = app_config.device
    model = ckpt.build_model(device)

    reports = []
    for resolution in resolutions:
        dataset = load_paired_dir(dataset_path, split=split, resize=resolution)
        reports.append(evaluate_model(model, dataset, resolution=resolution, device=device))
    return reports


def write_reports(reports: Sequence[ResolutionReport], path: PathLike) -> Path:
    """JSON report at `path`, plus one CSV per row next to it"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"reports": [_encode_nonfinite(r.model_dump()) for r in reports]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)

    for r in reports:
        suffix = r.resolution if r.resolution is not None else "native"
        r.model.to_csv(path.with_name(f"{path.stem}_{MODEL_LABEL.lower()}_{suffix}.csv"))
        r.baseline.to_csv(path.with_name(f"{path.stem}_{BASELINE_LABEL.lower()}_{suffix}.csv"))
    logger.info(f"Wrote evaluation report to {path}")
    return path


def read_reports(path: PathLike) -> List[ResolutionReport]:
    with open(path, "r") as f:
        payload = json.load(f)
    return [ResolutionReport.model_validate(_decode_nonfinite(r)) for r in payload["reports"]]
