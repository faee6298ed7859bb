"""
DeVigNet Inference Service
Frozen-weight devignetting for the CLI and a small HTTP service
"""

import os
import sys
import threading
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from fastapi import Depends, FastAPI, File, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from prometheus_client import CONTENT_TYPE_LATEST, Counter, Histogram, generate_latest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import LIBRARY_VERSION, app_config, service_config
from services.checkpoint_store import Checkpoint, load_checkpoint
from services.evaluation_service import run_model
from utils.errors import DataError, DevignetError, StructuralError
from utils.image_io import (
    decode_image_bytes, encode_png_bytes, read_image, side_by_side, validate_image, write_image,
)
from utils.logging_utils import log_error, setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

REQUEST_COUNT = Counter("devignet_requests_total", "Devignet requests", ["endpoint", "status"])
REQUEST_DURATION = Histogram("devignet_request_duration_seconds", "Devignet request duration")


class InferenceEngine:
    """Loaded model with frozen weights; run() is safe to call from several threads"""

    def __init__(self, checkpoint: Union[Checkpoint, PathLike], device: Optional[str] = None):
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = load_checkpoint(checkpoint, load_optimizer=False)
        self.device = torch.device(device or app_config.device)
        self.checkpoint = checkpoint
        self.model = checkpoint.build_model(self.device).eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    @property
    def step(self) -> int:
        return self.checkpoint.step

    def run(self, img: np.ndarray, name: str = "image") -> np.ndarray:
        validate_image(img, name)
        return run_model(self.model, img, self.device)


def infer(engine: Union[InferenceEngine, Checkpoint, PathLike], in_path: PathLike, out_path: PathLike,
          grid: bool = False) -> Path:
    """Devignet one image file to an 8-bit PNG at the original resolution"""
    if not isinstance(engine, InferenceEngine):
        engine = InferenceEngine(engine)
    img = read_image(in_path)
    output = engine.run(img, name=str(in_path))
    out_path = write_image(out_path, output)
    if grid:
        grid_path = out_path.with_name(f"{out_path.stem}_grid.png")
        write_image(grid_path, side_by_side(img, output))
        logger.info(f"Wrote comparison grid {grid_path}")
    logger.info(f"Devignetted {in_path} -> {out_path}")
    return out_path


# HTTP service

app = FastAPI(
    title="DeVigNet Inference Service",
    description="Vignetting removal for uploaded images",
    version=LIBRARY_VERSION,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

_engine: Optional[InferenceEngine] = None
_engine_lock = threading.Lock()


def get_engine() -> InferenceEngine:
    """Lazily load the checkpoint named by DEVIGNET_CHECKPOINT"""
    global _engine
    with _engine_lock:
        if _engine is None:
            if not app_config.serving_checkpoint:
                raise HTTPException(status_code=503, detail="No checkpoint configured (set DEVIGNET_CHECKPOINT)")
            try:
                _engine = InferenceEngine(app_config.serving_checkpoint)
            except DevignetError as e:
                logger.error(f"Failed to load checkpoint {app_config.serving_checkpoint}: {e}")
                raise HTTPException(status_code=503, detail=f"Checkpoint unavailable: {e}")
        return _engine


def set_engine(engine: Optional[InferenceEngine]):
    global _engine
    with _engine_lock:
        _engine = engine


@app.post("/devignet")
async def devignet_image(file: UploadFile = File(...), engine: InferenceEngine = Depends(get_engine)):
    """Devignet an uploaded image and return it as PNG"""
    start = time.time()
    data = await file.read()
    if len(data) > service_config.max_upload_mb * 1024 * 1024:
        REQUEST_COUNT.labels(endpoint="/devignet", status="413").inc()
        raise HTTPException(status_code=413, detail=f"Upload exceeds {service_config.max_upload_mb} MB")

    try:
        name = file.filename or "upload"
        output = engine.run(decode_image_bytes(data, name=name), name=name)
    except (DataError, StructuralError) as e:
        REQUEST_COUNT.labels(endpoint="/devignet", status="400").inc()
        raise HTTPException(status_code=400, detail=str(e))
    except DevignetError as e:
        log_error(logger, file.filename or "upload", e, {"endpoint": "/devignet"})
        REQUEST_COUNT.labels(endpoint="/devignet", status="500").inc()
        raise HTTPException(status_code=500, detail=f"Devignet failed: {e}")

    REQUEST_COUNT.labels(endpoint="/devignet", status="200").inc()
    REQUEST_DURATION.observe(time.time() - start)
    return Response(
        content=encode_png_bytes(output),
        media_type="image/png",
        headers={"X-Devignet-Step": str(engine.step)},
    )


@app.get("/metrics")
async def metrics():
    return Response(content=generate_latest(), media_type=CONTENT_TYPE_LATEST)


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    loaded = _engine is not None
    return {
        "status": "healthy" if loaded else "degraded",
        "service": "devignet-inference",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "model_loaded": loaded,
        "checkpoint_step": _engine.step if loaded else None,
        "version": LIBRARY_VERSION,
    }


def serve(host: Optional[str] = None, port: Optional[int] = None):
    import uvicorn

    host = host or service_config.host
    port = port or service_config.port
    logger.info(f"Starting DeVigNet inference service on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    serve()
