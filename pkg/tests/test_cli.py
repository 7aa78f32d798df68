"""Tests for the fwformer command line."""

from pathlib import Path

import pandas as pd
import pytest

from fwformer.cli import EXIT_OK, EXIT_USAGE, main
from fwformer.profiler import accounted_layer_count, read_energy_report
from fwformer.runner import CHECKPOINT_NAME, METRICS_NAME


@pytest.fixture
def trained(tmp_path: Path, config_file: Path) -> Path:
    """Output directory of a finished one-epoch tiny run."""
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
    return out


class TestTrainCommand:
    """Tests for ``fwformer train``."""

    def test_writes_run_outputs(self, trained: Path) -> None:
        """Test that training leaves metrics and a checkpoint behind."""
        assert (trained / CHECKPOINT_NAME).is_file()
        frame = pd.read_csv(trained / METRICS_NAME)
        assert frame["epoch"].tolist() == [1]

    def test_missing_data_path(
        self, tmp_path: Path, config_file: Path, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Test that a missing dataset exits with a usage error naming the path."""
        missing = tmp_path / "no-such-data"
        code = main(
            [
                "train",
                "--config",
                str(config_file),
                "--out",
                str(tmp_path / "run"),
                "--data",
                str(missing),
            ]
        )
        assert code == EXIT_USAGE
        assert str(missing) in caplog.text

    def test_unknown_config_key(
        self, tmp_path: Path, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Test that a typo in the config file is a usage error."""
        path = tmp_path / "bad.cfg"
        path.write_text("head=ssa\nlearning_rate=0.1\n", encoding="utf-8")
        assert main(["train", "--config", str(path)]) == EXIT_USAGE
        assert "learning_rate" in caplog.text

    def test_trains_on_generated_files(self, tmp_path: Path, config_file: Path) -> None:
        """Test gen-data followed by training on the written directory."""
        data = tmp_path / "bars"
        argv = ["gen-data", "--out", str(data), "--train", "8", "--test", "4"]
        assert main(argv) == EXIT_OK
        assert len(list((data / "train").rglob("*.csv"))) == 8
        out = tmp_path / "run"
        argv = ["train", "--config", str(config_file), "--out", str(out)]
        assert main([*argv, "--data", str(data)]) == EXIT_OK
        assert (out / CHECKPOINT_NAME).is_file()


class TestCheckpointCommands:
    """Tests for ``fwformer eval`` and ``fwformer energy``."""

    def test_eval(self, trained: Path) -> None:
        """Test that eval reports loss and accuracy of the test split."""
        argv = ["eval", "--checkpoint", str(trained / CHECKPOINT_NAME)]
        assert main(argv) == EXIT_OK
        frame = pd.read_csv(trained / "eval.csv")
        assert frame["split"].tolist() == ["test"]
        assert frame["samples"].tolist() == [8]
        assert 0.0 <= frame["accuracy"][0] <= 1.0

    def test_missing_checkpoint(self, tmp_path: Path) -> None:
        """Test that a missing checkpoint is a usage error."""
        argv = ["eval", "--checkpoint", str(tmp_path / "none.fwc")]
        assert main(argv) == EXIT_USAGE

    def test_energy(self, trained: Path) -> None:
        """Test that the energy report has one row per accounted layer."""
        argv = ["energy", "--checkpoint", str(trained / CHECKPOINT_NAME)]
        assert main(argv) == EXIT_OK
        report = read_energy_report(trained / "energy.jsonl")
        assert len(report.layers) == accounted_layer_count(1, True)
        assert not report.first_layer_is_float
        assert report.total_energy_mj >= 0.0


class TestAnalysisCommands:
    """Tests for ``bench``, ``scaling`` and ``ortho``."""

    def test_bench(self, tmp_path: Path, config_file: Path) -> None:
        """Test one timing row per requested head."""
        out = tmp_path / "bench"
        argv = ["bench", "--config", str(config_file), "--out", str(out)]
        argv += ["--heads", "ssa,fft1d", "--batches", "1", "--warmup", "0"]
        assert main(argv) == EXIT_OK
        frame = pd.read_csv(out / "bench.csv")
        assert frame["head"].tolist() == ["ssa", "fft1d"]
        assert (frame["fwd_ms"] > 0).all()
        ssa, fft = frame["params"].tolist()
        assert ssa > fft

    def test_bench_needs_two_heads(self, tmp_path: Path, config_file: Path) -> None:
        """Test that a comparison needs at least two heads."""
        argv = ["bench", "--config", str(config_file), "--heads", "ssa"]
        assert main([*argv, "--out", str(tmp_path)]) == EXIT_USAGE

    def test_scaling(self, tmp_path: Path) -> None:
        """Test rows per head and length, with quadratic SSA mixing counts."""
        out = tmp_path / "scaling"
        argv = ["scaling", "--out", str(out), "--heads", "ssa,fft1d,wt-haar"]
        argv += ["--min-n", "64", "--max-n", "256", "--dim", "16"]
        assert main(argv) == EXIT_OK
        frame = pd.read_csv(out / "scaling.csv")
        assert len(frame) == 9
        ssa = frame[frame["head"] == "ssa"]
        assert ssa["n"].tolist() == [64, 128, 256]
        macs = ssa["mixing_macs"].tolist()
        assert macs[1] == 4 * macs[0]

    def test_ortho(self, tmp_path: Path, config_file: Path) -> None:
        """Test one orthogonality score per training step."""
        out = tmp_path / "ortho"
        argv = ["ortho", "--config", str(config_file), "--out", str(out)]
        assert main([*argv, "--epochs", "2"]) == EXIT_OK
        frame = pd.read_csv(out / "ortho.csv")
        assert frame["step"].tolist() == [1, 2]
        assert (frame["score"] > -1e-9).all()

    @pytest.mark.parametrize(
        ("min_n", "max_n"), [("0", "256"), ("-4", "64"), ("128", "64")]
    )
    def test_scaling_bad_lengths(self, tmp_path: Path, min_n: str, max_n: str) -> None:
        """Test that non-positive or inverted length ranges are usage errors."""
        argv = ["scaling", "--out", str(tmp_path), "--heads", "fft1d"]
        argv += ["--min-n", min_n, "--max-n", max_n, "--dim", "16"]
        assert main(argv) == EXIT_USAGE
