"""
DeVigNet test configuration and shared fixtures
"""

import os
import sys

os.environ.setdefault("TESTING", "true")
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from config import AcemConfig, DaftConfig, ModelConfig, TrainConfig


def pytest_collection_modifyitems(config, items):
    run_slow = os.getenv("DEVIGNET_RUN_SLOW") == "1"
    skip_slow = pytest.mark.skip(reason="slow acceptance run, set DEVIGNET_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords and not run_slow:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv("DEVIGNET_SEED", raising=False)


def tiny_model_config(channels: int = 8, depth: int = 2, **kwargs) -> ModelConfig:
    return ModelConfig(
        pyramid_depth=depth,
        daft=DaftConfig(channels=channels, heads=2, **kwargs.pop("daft", {})),
        acem=AcemConfig(channels=channels, blocks_per_level=1, **kwargs.pop("acem", {})),
        **kwargs,
    )


@pytest.fixture
def model_config_factory():
    return tiny_model_config


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    """train/ (12 pairs) and test/ (4 pairs) of 64x64 synthetic data"""
    from services.dataset_service import make_synthetic_dataset

    root = tmp_path_factory.mktemp("synthetic")
    make_synthetic_dataset(12, 64, seed=3, out_dir=root / "train")
    make_synthetic_dataset(4, 64, seed=4, out_dir=root / "test")
    return root


@pytest.fixture
def tiny_train_config(synthetic_root, tmp_path) -> TrainConfig:
    return TrainConfig(
        lr=1e-3,
        steps=4,
        crop=32,
        seed=5,
        dataset_path=str(synthetic_root),
        output_dir=str(tmp_path / "run"),
        model=tiny_model_config(seed=5),
    )

