"""
DeVigNet Backend Tests - Training Service
Dry run, determinism, exact resume and failure modes
"""

import csv

import pytest
import torch

from network.model import build_model
from services.training_service import TrainingStream, run_training, train
from services.dataset_service import load_paired_dir
from utils.errors import DataError, NumericError


class TestTrainingService:
    """Test suite for the training loop"""

    @pytest.fixture(autouse=True)
    def setup_method(self, tiny_train_config, tmp_path):
        """Set up test environment before each test"""
        self.cfg = tiny_train_config
        self.tmp = tmp_path

    def with_updates(self, **updates):
        return self.cfg.model_copy(update=updates)

    def test_dry_run_returns_initial_checkpoint(self):
        """Test steps=0 returns the freshly initialized weights"""
        ckpt = train(self.with_updates(steps=0))
        initial = build_model(self.cfg.model).state_dict()
        assert ckpt.step == 0
        for name, tensor in initial.items():
            assert torch.equal(ckpt.weights[name], tensor)

    def test_loss_trace_deterministic(self):
        """Test two fixed-seed runs give identical loss traces"""
        a = run_training(self.with_updates(steps=10, output_dir=str(self.tmp / "a")))
        b = run_training(self.with_updates(steps=10, output_dir=str(self.tmp / "b")))
        assert len(a.losses) == 10
        assert a.losses == b.losses

    def test_resume_is_bit_exact(self):
        """Test 2k steps equals k steps plus a resumed k steps"""
        full = run_training(self.with_updates(steps=4, output_dir=str(self.tmp / "full")))
        half = run_training(self.with_updates(steps=2, output_dir=str(self.tmp / "half")))
        resumed = run_training(
            self.with_updates(steps=4, output_dir=str(self.tmp / "resumed")),
            resume_from=half.output_dir / "latest",
        )
        assert resumed.checkpoint.step == 4
        assert half.losses + resumed.losses == full.losses
        for name, tensor in full.checkpoint.weights.items():
            assert torch.equal(resumed.checkpoint.weights[name], tensor), name

    def test_csv_log_and_checkpoints(self):
        """Test the CSV log columns and periodic checkpoint directories"""
        result = run_training(self.with_updates(steps=4, checkpoint_every=2))
        with open(result.output_dir / "train_log.csv") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["step", "loss", "lr", "elapsed_s", "rss_mb"]
        assert [int(r["step"]) for r in rows] == [1, 2, 3, 4]
        assert float(rows[0]["lr"]) == self.cfg.lr
        assert (result.output_dir / "step_2" / "weights.bin").is_file()
        assert (result.output_dir / "step_4" / "weights.bin").is_file()
        assert (result.output_dir / "latest" / "optimizer.pt").is_file()
        run_log_text = (result.output_dir / "train.log").read_text()
        assert "Saved checkpoint step=4" in run_log_text
        assert "training_started" in run_log_text

    def test_validation_every(self, synthetic_root):
        """Test eval_every records held-out PSNR"""
        result = run_training(self.with_updates(steps=2, eval_every=1, val_path=str(synthetic_root)))
        # two periodic entries plus the final one
        assert len(result.validation) == 3
        assert all("psnr_db" in v for v in result.validation)

    def test_non_finite_loss_aborts(self, monkeypatch):
        """Test a NaN loss raises a numeric error naming the step"""
        monkeypatch.setattr(
            "services.training_service.loss_total",
            lambda pred, gt, loss_lambda: (pred * float("nan")).mean(),
        )
        with pytest.raises(NumericError, match="step 1") as exc:
            train(self.with_updates(steps=3))
        assert exc.value.exit_code == 3

    def test_empty_dataset(self, tmp_path):
        """Test an empty dataset is a data error"""
        (tmp_path / "empty" / "input").mkdir(parents=True)
        (tmp_path / "empty" / "target").mkdir(parents=True)
        with pytest.raises(DataError):
            train(self.with_updates(dataset_path=str(tmp_path / "empty")))

    def test_stream_order(self, synthetic_root):
        """Test each epoch visits every pair once in a seeded order"""
        dataset = load_paired_dir(synthetic_root, split="train", crop=32, seed=1)
        stream = TrainingStream(dataset, seed=1, total_positions=24)
        first = [stream.index_at(p) for p in range(12)]
        second = [stream.index_at(p) for p in range(12, 24)]
        assert sorted(first) == list(range(12))
        assert sorted(second) == list(range(12))
        assert first == [TrainingStream(dataset, seed=1, total_positions=24).index_at(p) for p in range(12)]
