import numpy as np
import pandas as pd
import pytest

from experiments.plotdata import (
    ACCURACY_VS_SPARSITY_COLUMNS,
    ACCURACY_VS_STEP_COLUMNS,
    ADVERSARIAL_COLUMNS,
    TRAJECTORY_COLUMNS,
    emit_plotdata,
    fit_trajectory_pca,
)
from experiments.run_log import RunLog
from shared_models.errors import EmptyRunLogError, FipError
from shared_models.experiment_config import ExperimentKind


class TestRunLog:
    def test_records_are_appended_as_json_lines(self, tmp_path):
        path = tmp_path.joinpath("runlog.jsonl")
        run_log = RunLog("run-a", path)
        run_log.log("base", "train-epoch", phase_step=0, accuracies={"task-1/train": 0.5}, losses={"train": 0.7})
        run_log.log("fip/task-2", "path-step", phase_step=0, g_norm_sq=1e-6, distance_from_w0=0.01)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        restored = RunLog.read(path)
        assert [r.step for r in restored.records] == [0, 1]
        assert restored.run_id == "run-a"
        assert restored.records[1].g_norm_sq == 1e-6
        assert restored.last(kind="train-epoch").accuracies == {"task-1/train": 0.5}

    def test_filter(self):
        run_log = RunLog("run-b")
        run_log.log("sparsify/p=0.1", "path-step")
        run_log.log("sparsify/p=0.1", "sparsity")
        run_log.log("sparsify/p=0.2", "sparsity")
        assert len(run_log.filter(kind="sparsity")) == 2
        assert len(run_log.filter(phase_prefix="sparsify/p=0.1")) == 2
        with pytest.raises(EmptyRunLogError):
            run_log.last(kind="attack")

    def test_empty_file(self, tmp_path):
        path = tmp_path.joinpath("runlog.jsonl")
        path.write_text("")
        with pytest.raises(EmptyRunLogError):
            RunLog.read(path)

    def test_interleaved_runs_rejected(self, tmp_path):
        path = tmp_path.joinpath("runlog.jsonl")
        RunLog("a", path).log("base", "eval")
        RunLog("a", path).log("base", "eval")
        with pytest.raises(FipError):
            RunLog.read(path)


class TestPlotData:
    def test_single_step_log(self, tmp_path):
        run_log = RunLog("single")
        run_log.log("fip/task-2", "path-step", accuracies={"task-1/test": 0.9})
        written = emit_plotdata(run_log, ExperimentKind.CONTINUAL, tmp_path, render_figures=False)
        df = pd.read_csv(written[0])
        assert list(df.columns) == ACCURACY_VS_STEP_COLUMNS
        assert len(df) == 1
        assert df.loc[0, "accuracy"] == 0.9

    def test_columns_per_kind(self, tmp_path):
        run_log = RunLog("kinds")
        run_log.log("sparsify/p=0.5", "sparsity", values={"target_sparsity": 0.5, "achieved_sparsity": 0.5,
                                                         "train_accuracy": 1.0, "test_accuracy": 0.95})
        run_log.log("attack", "attack", values={"model": "base", "clean_accuracy": 1.0,
                                                 "adversarial_accuracy": 0.4, "coherence": 0.8})
        sparsity = emit_plotdata(run_log, ExperimentKind.SPARSIFY, tmp_path.joinpath("s"), render_figures=False)
        attack = emit_plotdata(run_log, ExperimentKind.ENSEMBLE, tmp_path.joinpath("e"), render_figures=False)
        assert list(pd.read_csv(sparsity[1]).columns) == ACCURACY_VS_SPARSITY_COLUMNS
        assert list(pd.read_csv(attack[1]).columns) == ADVERSARIAL_COLUMNS

    def test_empty_log(self, tmp_path):
        with pytest.raises(EmptyRunLogError):
            emit_plotdata(RunLog("empty"), ExperimentKind.SPECTRUM, tmp_path)

    def test_trajectory_projection_written(self, tmp_path, rng):
        run_log = RunLog("traj")
        run_log.log("fip", "path-step")
        trajectories = {"fip/task-2": rng.standard_normal((6, 10)), "fip/task-3": rng.standard_normal((4, 10))}
        written = emit_plotdata(run_log, ExperimentKind.CONTINUAL, tmp_path, trajectories, render_figures=False)
        df = pd.read_csv(written[-1])
        assert list(df.columns) == TRAJECTORY_COLUMNS
        assert len(df) == 10

    def test_pca_recovers_planar_trajectory(self, rng):
        basis = np.linalg.qr(rng.standard_normal((30, 2)))[0]
        offset = rng.standard_normal(30)
        points = offset + rng.standard_normal((12, 2)) @ basis.T
        pca, coords = fit_trajectory_pca(points)
        reconstructed = pca.inverse_transform(coords)
        assert np.max(np.abs(reconstructed - points)) < 1e-9

    def test_pca_of_two_points(self):
        points = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
        _, coords = fit_trajectory_pca(points)
        assert coords.shape == (2, 2)
        assert abs(coords[1, 0] - coords[0, 0]) == pytest.approx(3.0)
