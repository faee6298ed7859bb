"""
DeVigNet Training Monitor
Step-level training telemetry: structured events, process memory and the
CSV training log (step,loss,lr,elapsed_s,rss_mb)
"""

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import psutil
import structlog
from prometheus_client import CollectorRegistry, Counter, Gauge

from utils.logging_utils import EVENTS_LOGGER, configure_structlog

configure_structlog()
logger = structlog.get_logger(EVENTS_LOGGER)

CSV_COLUMNS = ("step", "loss", "lr", "elapsed_s", "rss_mb")


@dataclass
class StepRecord:
    step: int
    loss: float
    lr: float
    elapsed_s: float
    rss_mb: float


class TrainingMonitor:
    """Collects per-step losses and writes them as machine-parsable CSV"""

    def __init__(self, csv_path: Optional[Path] = None, window: int = 20, append: bool = False):
        self.csv_path = Path(csv_path) if csv_path else None
        self.window = window
        self.history: List[StepRecord] = []
        self.start_time = time.time()
        self.process = psutil.Process()

        # Per-run registry so repeated runs in one process do not collide
        self.registry = CollectorRegistry()
        self.steps_total = Counter("devignet_train_steps_total", "Optimizer steps taken", registry=self.registry)
        self.loss_gauge = Gauge("devignet_train_loss", "Most recent training loss", registry=self.registry)
        self.memory_gauge = Gauge("devignet_train_rss_bytes", "Resident set size", registry=self.registry)

        self._file = None
        self._writer = None
        if self.csv_path is not None:
            self.csv_path.parent.mkdir(parents=True, exist_ok=True)
            exists = self.csv_path.exists() and self.csv_path.stat().st_size > 0
            self._file = open(self.csv_path, "a" if append else "w", newline="")
            self._writer = csv.writer(self._file)
            if not (append and exists):
                self._writer.writerow(CSV_COLUMNS)
                self._file.flush()

    def _rss_bytes(self) -> int:
        try:
            return self.process.memory_info().rss
        except psutil.Error:
            return 0

    def record_step(self, step: int, loss: float, lr: float) -> StepRecord:
        rss = self._rss_bytes()
        record = StepRecord(
            step=step,
            loss=float(loss),
            lr=float(lr),
            elapsed_s=round(time.time() - self.start_time, 4),
            rss_mb=round(rss / (1024 * 1024), 2),
        )
        self.history.append(record)

        self.steps_total.inc()
        self.loss_gauge.set(record.loss)
        self.memory_gauge.set(rss)

        if self._writer is not None:
            self._writer.writerow([record.step, repr(record.loss), repr(record.lr), record.elapsed_s, record.rss_mb])
            self._file.flush()
        return record

    def log_event(self, event: str, **fields):
        logger.info(event, **fields)

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.history]

    def summary(self) -> Dict[str, float]:
        losses = self.losses
        if not losses:
            return {"steps": 0}
        head = losses[: self.window]
        tail = losses[-self.window:]
        return {
            "steps": len(losses),
            "first_window_loss": sum(head) / len(head),
            "last_window_loss": sum(tail) / len(tail),
            "elapsed_s": round(time.time() - self.start_time, 4),
            "rss_mb": round(self._rss_bytes() / (1024 * 1024), 2),
        }

    def close(self):
        if self._file is not None:
            self._file.close()
            self._file = None
            self._writer = None
