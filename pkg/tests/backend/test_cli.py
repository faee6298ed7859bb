"""
DeVigNet Backend Tests - Command Line
End-to-end subcommands and exit codes
"""

import json

import pytest

from devignet import _parse_resolutions, main
from utils.errors import UsageError

TINY = [
    "--override", "model.daft.channels=8", "--override", "model.daft.heads=2",
    "--override", "model.acem.channels=8", "--override", "model.acem.blocks_per_level=1",
    "--override", "crop=32", "--override", "lr=0.001",
]


class TestCommandLine:
    """Test suite for devignet.py"""

    @pytest.fixture(autouse=True)
    def setup_method(self, tmp_path):
        """Set up test environment before each test"""
        self.tmp = tmp_path
        self.data = tmp_path / "syn"

    def synth(self):
        assert main(["synth", "--n", "6", "--size", "48", "--seed", "1", "--out", str(self.data)]) == 0

    def test_synth_train_eval_infer(self, capsys):
        """Test the synth -> train -> eval -> infer workflow exits 0"""
        self.synth()
        run = self.tmp / "run"
        code = main(["train", *TINY, "--override", f"dataset_path={json.dumps(str(self.data))}",
                     "--steps", "2", "--output-dir", str(run)])
        assert code == 0
        assert (run / "latest" / "weights.bin").is_file()

        report = self.tmp / "report.json"
        code = main(["eval", "--ckpt", str(run / "latest"), "--data", str(self.data), "--split", "train",
                     "--res", "32,native", "--report", str(report)])
        assert code == 0
        assert len(json.loads(report.read_text())["reports"]) == 2

        out = self.tmp / "out.png"
        code = main(["infer", "--ckpt", str(run / "latest"), "--in", str(self.data / "input" / "0000.png"),
                     "--out", str(out), "--grid"])
        assert code == 0
        assert out.is_file()
        assert (self.tmp / "out_grid.png").is_file()
        assert "Input" in capsys.readouterr().out

    def test_resume(self):
        """Test --resume continues to the requested total"""
        self.synth()
        run = self.tmp / "run"
        base = ["train", *TINY, "--override", f"dataset_path={json.dumps(str(self.data))}", "--output-dir", str(run)]
        assert main([*base, "--steps", "1"]) == 0
        assert main([*base, "--steps", "2", "--resume", str(run / "latest")]) == 0
        meta = json.loads((run / "latest" / "meta.json").read_text())
        assert meta["step"] == 2

    def test_ablate(self):
        """Test ablate writes a report with one row per variant"""
        self.synth()
        report = self.tmp / "ablation.json"
        code = main(["ablate", *TINY, "--steps", "1", "--output-dir", str(self.tmp / "abl"),
                     "--train", str(self.data), "--val", str(self.data),
                     "--variants", "full", "no_acem", "--report", str(report)])
        assert code == 0
        assert set(json.loads(report.read_text())["variants"]) == {"full", "no_acem"}

    def test_unknown_variant_is_usage_error(self):
        """Test an unknown ablation variant exits 1"""
        self.synth()
        code = main(["ablate", *TINY, "--steps", "1", "--output-dir", str(self.tmp / "abl"),
                     "--train", str(self.data), "--val", str(self.data), "--variants", "no_such"])
        assert code == 1

    def test_missing_dataset_is_data_error(self):
        """Test a missing dataset exits 2"""
        code = main(["train", *TINY, "--override", f"dataset_path={json.dumps(str(self.tmp / 'none'))}",
                     "--steps", "1", "--output-dir", str(self.tmp / "run")])
        assert code == 2

    def test_missing_checkpoint_is_data_error(self):
        """Test eval on a missing checkpoint exits 2"""
        self.synth()
        assert main(["eval", "--ckpt", str(self.tmp / "none"), "--data", str(self.data), "--split", "train"]) == 2

    def test_invalid_config_is_usage_error(self):
        """Test a config that fails validation exits 1"""
        assert main(["train", "--override", "lr=-1", "--output-dir", str(self.tmp / "run")]) == 1

    def test_bad_arguments_exit_1(self):
        """Test argparse failures use the usage exit code"""
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--n", "three"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_parse_resolutions(self):
        """Test resolution list parsing"""
        assert _parse_resolutions("512, 1024,native") == [512, 1024, None]
        with pytest.raises(UsageError):
            _parse_resolutions("big")
        with pytest.raises(UsageError):
            _parse_resolutions("4")
