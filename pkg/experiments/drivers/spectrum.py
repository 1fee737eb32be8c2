from pathlib import Path
from typing import Optional

import numpy as np

from experiments.datasets import build_tasks
from experiments.drivers.base import finish, open_run_log, prepare_base
from experiments.output_dir import OutputDir
from experiments.run_log import RunLog
from metric.metric_tensor import MetricEvaluation, anchor_subsample, metric_matrix, metric_spectrum
from shared_models.experiment_config import ExperimentConfig
from shared_models.metric import SpectrumReport


def save_spectrum_report(report: SpectrumReport, path: Path) -> Path:
    path.write_text(report.model_dump_json(indent=2))
    return path


def run_spectrum(cfg: ExperimentConfig, out: Optional[OutputDir] = None) -> RunLog:
    """Eigenvalues of the metric of the trained base network on its training inputs"""
    run_log = open_run_log(cfg, out)
    task = build_tasks(cfg)[0]
    spec, w, _ = prepare_base(cfg, task, run_log, out)
    settings = cfg.spectrum
    anchor = anchor_subsample(task.train, settings.anchor_batch_size, seed=cfg.seed)
    me = MetricEvaluation(spec=spec, w=w, batch=anchor, output_mode=settings.output_mode)
    report = metric_spectrum(me, tol_rel=settings.tol_rel)
    trace = float(np.trace(metric_matrix(me)))
    run_log.log("spectrum", "spectrum", values={
        "n": report.n,
        "N": report.N,
        "lambda_max": report.lambda_max,
        "degeneracy_dim": report.degeneracy_dim,
        "rank": report.rank,
        "trace": trace,
        "eigenvalue_sum": float(np.sum(report.eigenvalues)),
        "tol_rel": settings.tol_rel,
    })
    if out is not None:
        save_spectrum_report(report, out.root.joinpath("spectrum.json"))
    return finish(cfg, run_log, out)
