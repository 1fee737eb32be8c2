from typing import Dict, Optional

import numpy as np
from loguru import logger

from experiments.datasets import as_class_incremental, build_tasks
from experiments.drivers.base import finish, open_run_log, persist_path, persist_weights, prepare_base
from experiments.operators import adapt_to_task, evaluate, grow_for_task, trajectory
from experiments.output_dir import OutputDir
from experiments.run_log import RunLog
from experiments.training import fine_tune
from shared_models.experiment_config import ContinualScenario, ExperimentConfig


def run_continual(cfg: ExperimentConfig, out: Optional[OutputDir] = None) -> RunLog:
    """
    Base training on task 1, then one FIP adaptation phase per further task, anchored on every learned head.
    In the class-incremental scenario all tasks share one head that widens per task, so every task is scored
    over all classes seen so far.
    The naive baseline fine-tunes its own copy on each new task with the same number of updates as path steps.
    """
    run_log = open_run_log(cfg, out)
    tasks = build_tasks(cfg)
    if cfg.continual.scenario is ContinualScenario.CLASS_INCREMENTAL:
        tasks = as_class_incremental(tasks)
    spec, w, ckpt = prepare_base(cfg, tasks[0], run_log, out)
    baseline_spec, baseline_w = spec, w
    trajectories: Dict[str, np.ndarray] = dict()

    for k, task in enumerate(tasks[1:], start=1):
        learned = tasks[:k]
        seen = tasks[:k + 1]
        head_seed = cfg.seed + task.task_id
        logger.info(f"━━━━━━ Continual phase {k}: task {task.task_id} ({task.name}) ━━━━━━")

        phase = f"fip/task-{task.task_id}"
        spec, path = adapt_to_task(
            spec, w, task, learned, cfg.path, cfg.continual.head_init_scale, head_seed, run_log, phase,
        )
        w = path.endpoint
        run_log.log(
            phase, "eval", phase_step=k, accuracies=evaluate(spec, w, seen),
            distance_from_w0=path.displacement(),
            values={"path_length": path.euclidean_length(), "n_steps": len(path.steps)},
        )
        trajectories[phase] = trajectory(path)
        persist_path(out, f"task-{task.task_id}", path)
        ckpt = persist_weights(out, ckpt, f"fip-task-{task.task_id}", "adapt", spec, w, task_id=task.task_id)

        if cfg.continual.run_baseline:
            phase = f"baseline/task-{task.task_id}"
            baseline_spec, start = grow_for_task(
                baseline_spec, baseline_w, task, cfg.continual.head_init_scale, head_seed,
            )
            baseline_w, length = fine_tune(baseline_spec, start, task.train, cfg.training, n_updates=cfg.path.n_steps)
            run_log.log(
                phase, "eval", phase_step=k, accuracies=evaluate(baseline_spec, baseline_w, seen),
                distance_from_w0=float(np.linalg.norm(baseline_w.values - start.values)),
                values={"path_length": length, "n_updates": cfg.path.n_steps},
            )
    return finish(cfg, run_log, out, trajectories)
