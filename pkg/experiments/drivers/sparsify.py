from typing import Dict, Optional

import numpy as np

from experiments.datasets import build_tasks
from experiments.drivers.base import finish, open_run_log, persist_path, persist_weights, prepare_base
from experiments.operators import evaluate, sparsify_network, trajectory
from experiments.output_dir import OutputDir
from experiments.run_log import RunLog
from objectives import sparse_count
from shared_models.experiment_config import ExperimentConfig


def run_sparsify(cfg: ExperimentConfig, out: Optional[OutputDir] = None) -> RunLog:
    """One sparsifying FIP per grid point, each starting from the base network, then the hard projection"""
    run_log = open_run_log(cfg, out)
    task = build_tasks(cfg)[0]
    spec, w, ckpt = prepare_base(cfg, task, run_log, out)
    settings = cfg.sparsify
    eligible = spec.param_count if settings.include_biases else int(np.count_nonzero(~spec.bias_mask()))
    trajectories: Dict[str, np.ndarray] = dict()

    for idx, p in enumerate(settings.grid):
        phase = f"sparsify/p={p:g}"
        w_p, achieved, path = sparsify_network(
            spec, w, p, [task], cfg.path, settings.ref_point, settings.schedule, settings.include_biases,
            run_log, phase,
        )
        accuracies = evaluate(spec, w_p, [task])
        values = {
            "target_sparsity": p,
            "achieved_sparsity": achieved,
            "expected_sparsity": sparse_count(eligible, p) / spec.param_count,
            "zero_fraction": float(np.count_nonzero(w_p.values == 0.0) / w_p.n),
            "train_accuracy": accuracies[f"task-{task.task_id}/train"],
            "test_accuracy": accuracies[f"task-{task.task_id}/test"],
        }
        if path is not None:
            pre = evaluate(spec, path.endpoint, [task])
            values["pre_projection_test_accuracy"] = pre[f"task-{task.task_id}/test"]
            values["path_length"] = path.euclidean_length()
            trajectories[phase] = trajectory(path)
            persist_path(out, f"p={p:g}", path)
        run_log.log(phase, "sparsity", phase_step=idx, accuracies=accuracies, values=values)
        persist_weights(out, ckpt, f"sparse-p={p:g}", "sparsify", spec, w_p, p=p, achieved=achieved)
    return finish(cfg, run_log, out, trajectories)
