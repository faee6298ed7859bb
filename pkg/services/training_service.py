"""
DeVigNet Training Service
Seeded, step-based training loop (forward -> MSE + lambda(1 - SSIM) ->
backward -> Adam) with periodic checkpoints, validation and exact resume
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from config import TrainConfig, app_config
from network.losses import loss_total
from network.model import DeVigNet, build_model
from services.checkpoint_store import Checkpoint, load_checkpoint, save_checkpoint
from services.dataset_service import PairedImageDataset, load_paired_dir
from services.evaluation_service import evaluate_model
from utils.errors import DataError, NumericError, UsageError
from utils.logging_utils import run_log, setup_logger
from utils.training_monitor import TrainingMonitor

logger = setup_logger(__name__)

PathLike = Union[str, Path]

LATEST_DIR = "latest"
TRAIN_LOG = "train_log.csv"


class TrainingStream(Dataset):
    """Position-addressed sample stream: a fresh seeded permutation every epoch,
    crop offsets keyed on the global position"""

    def __init__(self, dataset: PairedImageDataset, seed: int, total_positions: int):
        if len(dataset) == 0:
            raise DataError("training dataset is empty")
        self.dataset = dataset
        self.seed = seed
        self.total_positions = total_positions
        self._perms: Dict[int, np.ndarray] = {}

    def permutation(self, epoch: int) -> np.ndarray:
        if epoch not in self._perms:
            self._perms[epoch] = np.random.default_rng([self.seed, epoch]).permutation(len(self.dataset))
        return self._perms[epoch]

    def index_at(self, position: int) -> int:
        n = len(self.dataset)
        return int(self.permutation(position // n)[position % n])

    def __len__(self) -> int:
        return self.total_positions

    def __getitem__(self, position: int):
        sample = self.dataset.load(self.index_at(position), crop_key=position)
        inp, tgt = sample.to_tensors()
        return inp[0], tgt[0]


@dataclass
class TrainingResult:
    checkpoint: Checkpoint
    losses: List[float] = field(default_factory=list)
    validation: List[Dict[str, float]] = field(default_factory=list)
    output_dir: Optional[Path] = None


def _make_loader(stream: TrainingStream, start_step: int, end_step: int, cfg: TrainConfig) -> DataLoader:
    positions = range(start_step * cfg.batch_size, end_step * cfg.batch_size)
    return DataLoader(
        stream,
        batch_size=cfg.batch_size,
        sampler=positions,
        shuffle=False,
        num_workers=cfg.num_workers,
        drop_last=False,
    )


def _check_finite(loss: torch.Tensor, step: int, pred: torch.Tensor, inp: torch.Tensor):
    if torch.isfinite(loss).item():
        return
    raise NumericError(
        "non-finite training loss",
        step=step,
        diagnostics={
            "loss": float(loss.detach()),
            "pred_finite": bool(torch.isfinite(pred).all().item()),
            "input_min": float(inp.min()),
            "input_max": float(inp.max()),
        },
    )


def _validate(model: DeVigNet, val_set: Optional[PairedImageDataset], step: int,
              monitor: TrainingMonitor, device) -> Optional[Dict[str, float]]:
    if val_set is None:
        return None
    report = evaluate_model(model, val_set, device=device)
    entry = {
        "step": step,
        "psnr_db": report.model.aggregate.psnr_db,
        "input_psnr_db": report.baseline.aggregate.psnr_db,
    }
    monitor.log_event("validation", **entry)
    return entry


def run_training(cfg: TrainConfig, resume_from: Optional[PathLike] = None) -> TrainingResult:
    """Train to cfg.steps total steps; every record also lands in <output_dir>/train.log"""
    output_dir = Path(cfg.output_dir)
    with run_log(output_dir):
        return _run_training(cfg, output_dir, resume_from)


def _run_training(cfg: TrainConfig, output_dir: Path, resume_from: Optional[PathLike]) -> TrainingResult:
    device = torch.device(app_config.device)

    dataset = load_paired_dir(cfg.dataset_path, split="train", crop=cfg.crop, seed=cfg.seed)
    if len(dataset) == 0:
        raise DataError(f"no training pairs found in {cfg.dataset_path}")
    val_set = load_paired_dir(cfg.val_path, split="test") if cfg.val_path else None

    model = build_model(cfg.model).to(device)
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise UsageError("model has no trainable parameters (both DAFT and ACEM disabled)")
    optimizer = torch.optim.Adam(params, lr=cfg.lr)

    start_step = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from, expected_config=cfg.model)
        model.load_state_dict(ckpt.weights, strict=True)
        if ckpt.optimizer_state is not None:
            optimizer.load_state_dict(ckpt.optimizer_state)
        else:
            logger.warning(f"Checkpoint {resume_from} has no optimizer state, Adam restarts from zero moments")
        start_step = ckpt.step
        if start_step > cfg.steps:
            raise UsageError(f"checkpoint is at step {start_step}, beyond the requested {cfg.steps} steps")
        logger.info(f"Resuming from {resume_from} at step {start_step}")

    result = TrainingResult(checkpoint=Checkpoint.from_model(model, step=start_step), output_dir=output_dir)
    if cfg.steps == start_step:
        logger.info("Nothing to train (dry run), returning the initial checkpoint")
        save_checkpoint(result.checkpoint, output_dir / LATEST_DIR)
        return result

    stream = TrainingStream(dataset, seed=cfg.seed, total_positions=cfg.steps * cfg.batch_size)
    loader = _make_loader(stream, start_step, cfg.steps, cfg)
    monitor = TrainingMonitor(output_dir / TRAIN_LOG, append=resume_from is not None)
    monitor.log_event(
        "training_started", steps=cfg.steps, start_step=start_step, pairs=len(dataset),
        lr=cfg.lr, batch_size=cfg.batch_size, crop=cfg.crop, seed=cfg.seed,
    )

    model.train()
    step = start_step
    try:
        for inp, tgt in loader:
            inp = inp.to(device)
            tgt = tgt.to(device)
            pred = model(inp, clamp_output=False)
            loss = loss_total(pred, tgt, loss_lambda=cfg.loss_lambda)
            _check_finite(loss, step + 1, pred, inp)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            step += 1

            record = monitor.record_step(step, loss.item(), optimizer.param_groups[0]["lr"])
            result.losses.append(record.loss)

            if cfg.eval_every and step % cfg.eval_every == 0:
                entry = _validate(model, val_set, step, monitor, device)
                if entry:
                    result.validation.append(entry)
                model.train()

            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step != cfg.steps:
                ckpt = Checkpoint.from_model(model, step=step, optimizer=optimizer)
                save_checkpoint(ckpt, output_dir / f"step_{step}")
                save_checkpoint(ckpt, output_dir / LATEST_DIR)
    except NumericError as e:
        logger.error(f"Training aborted: {e}")
        raise
    finally:
        monitor.close()

    snapshot = None
    if val_set is not None:
        entry = _validate(model, val_set, step, monitor, device)
        result.validation.append(entry)
        snapshot = {"validation": entry}

    final = Checkpoint.from_model(model, step=step, optimizer=optimizer, metrics_snapshot=snapshot)
    save_checkpoint(final, output_dir / f"step_{step}")
    save_checkpoint(final, output_dir / LATEST_DIR)
    result.checkpoint = final

    summary = monitor.summary()
    monitor.log_event("training_finished", **summary)
    logger.info(
        f"Training finished at step {step}: first-window loss {summary.get('first_window_loss', float('nan')):.6f}, "
        f"last-window loss {summary.get('last_window_loss', float('nan')):.6f}"
    )
    return result


def train(cfg: TrainConfig, resume_from: Optional[PathLike] = None) -> Checkpoint:
    return run_training(cfg, resume_from=resume_from).checkpoint
