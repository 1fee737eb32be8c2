import json

import pytest

from experiments.drivers import DRIVERS
from experiments.main import main
from experiments.output_dir import LOCK_NAME, OutputDir
from shared_models.errors import OutputLockedError
from shared_models.experiment_config import ExperimentConfig, ExperimentKind


def write_config(tmp_path, **overrides) -> str:
    raw = {
        "kind": "spectrum",
        "run_id": "cli-spectrum",
        "dataset": {"source": "blobs", "n_per_class": 20, "seed": 0},
        "network": {"hidden_dims": [4]},
        "training": {"epochs": 3},
        "spectrum": {"anchor_batch_size": 16},
    }
    raw.update(overrides)
    path = tmp_path.joinpath("config.json")
    path.write_text(json.dumps(raw))
    return str(path)


class TestConfig:
    def test_seed_override_reaches_every_seed(self):
        cfg = ExperimentConfig(kind=ExperimentKind.SPECTRUM).with_seed(11)
        assert (cfg.seed, cfg.training.seed, cfg.path.seed) == (11, 11, 11)

    def test_compose_needs_two_tasks(self):
        with pytest.raises(ValueError):
            ExperimentConfig(kind=ExperimentKind.COMPOSE)

    def test_default_run_id(self):
        assert ExperimentConfig(kind=ExperimentKind.SPARSIFY, seed=3).resolved_run_id == "sparsify-seed3"


class TestOutputDir:
    def test_lock_is_exclusive(self, tmp_path):
        cfg = ExperimentConfig(kind=ExperimentKind.SPECTRUM)
        with OutputDir(tmp_path, cfg):
            assert tmp_path.joinpath(LOCK_NAME).exists()
            with pytest.raises(OutputLockedError):
                with OutputDir(tmp_path, cfg):
                    pass
        assert not tmp_path.joinpath(LOCK_NAME).exists()
        assert tmp_path.joinpath("config.resolved.json").exists()


class TestMain:
    def test_invalid_config_exits_2(self, tmp_path, capsys):
        config = write_config(tmp_path, path={"n_steps": 0})
        assert main(["spectrum", "--config", config, "--out", str(tmp_path.joinpath("out"))]) == 2
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["error"] == "invalid-config"

    def test_kind_mismatch(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["sparsify", "--config", config, "--out", str(tmp_path.joinpath("out"))]) == 2
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["error"] == "invalid-config"
        assert payload["details"]["config"] == config

    def test_unexpected_failure_still_reports(self, tmp_path, capsys, monkeypatch):
        def broken(cfg, out):
            raise RuntimeError("driver fell over")

        monkeypatch.setitem(DRIVERS, ExperimentKind.SPECTRUM, broken)
        out = tmp_path.joinpath("out")
        assert main(["spectrum", "--config", write_config(tmp_path), "--out", str(out)]) == 1
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload == {"error": "internal-error", "message": "driver fell over", "details": {"type": "RuntimeError"}}
        assert not out.joinpath(LOCK_NAME).exists()

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["spectrum", "--config", str(tmp_path.joinpath("absent.json"))]) == 1
        assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["error"] == "io-error"

    def test_locked_output(self, tmp_path, capsys):
        out = tmp_path.joinpath("out")
        out.mkdir()
        out.joinpath(LOCK_NAME).write_text("123")
        assert main(["spectrum", "--config", write_config(tmp_path), "--out", str(out)]) == 1
        assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["error"] == "output-locked"

    def test_spectrum_run(self, tmp_path):
        out = tmp_path.joinpath("out")
        assert main(["spectrum", "--config", write_config(tmp_path), "--out", str(out), "--seed", "2"]) == 0
        report = json.loads(out.joinpath("spectrum.json").read_text())
        assert report["n"] == 2 * 4 + 4 + 4 * 2 + 2
        assert report["N"] == 16
        assert out.joinpath("runlog.jsonl").exists()
        assert out.joinpath("checkpoints", "base.fipc").exists()
        assert out.joinpath("plotdata", "accuracy-vs-step.csv").exists()
        assert not out.joinpath(LOCK_NAME).exists()
        resolved = json.loads(out.joinpath("config.resolved.json").read_text())
        assert resolved["training"]["seed"] == 2
