"""
DeVigNet Ablation Service
Trains the structural variants (pyramid depth, no ACEM, no DAFT) under an
identical budget and evaluates each on the same held-out pairs
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from pydantic import BaseModel

from config import TrainConfig, apply_overrides
from services.dataset_service import load_paired_dir
from services.evaluation_service import MetricsReport, evaluate_model
from services.training_service import run_training
from utils.errors import UsageError
from utils.logging_utils import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

VARIANTS: Dict[str, Dict[str, object]] = {
    "full": {},
    "depth3": {"model.pyramid_depth": 3},
    "depth4": {"model.pyramid_depth": 4},
    "no_acem": {"model.acem.enabled": False},
    "no_daft": {"model.daft.enabled": False},
}


class AblationReport(BaseModel):
    baseline: MetricsReport
    variants: Dict[str, MetricsReport]

    def psnr_table(self) -> Dict[str, float]:
        table = {"input": self.baseline.aggregate.psnr_db}
        table.update({name: report.aggregate.psnr_db for name, report in self.variants.items()})
        return table


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    if name not in VARIANTS:
        raise UsageError(f"unknown ablation variant {name!r}, choose from {sorted(VARIANTS)}")
    data = base.model_dump(mode="json")
    data = apply_overrides(data, dict(VARIANTS[name]))
    data["output_dir"] = str(Path(base.output_dir) / name)
    return TrainConfig.model_validate(data)


def run_ablation(base: TrainConfig, val_dir: PathLike, variants: Optional[Sequence[str]] = None,
                 train_dir: Optional[PathLike] = None) -> AblationReport:
    names: List[str] = list(variants) if variants else list(VARIANTS)
    if train_dir is not None:
        base = base.model_copy(update={"dataset_path": str(train_dir)})
    val_set = load_paired_dir(val_dir, split="test")

    reports: Dict[str, MetricsReport] = {}
    baseline: Optional[MetricsReport] = None
    for name in names:
        cfg = variant_config(base, name)
        logger.info(f"Ablation variant {name}: training {cfg.steps} steps into {cfg.output_dir}")
        result = run_training(cfg)
        model = result.checkpoint.build_model()
        evaluation = evaluate_model(model, val_set)
        reports[name] = evaluation.model.model_copy(update={"label": name})
        if baseline is None:
            baseline = evaluation.baseline

    report = AblationReport(baseline=baseline, variants=reports)
    logger.info(f"Ablation psnr_db: {report.psnr_table()}")
    return report
