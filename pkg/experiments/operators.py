"""
The two weight-space operators the experiments compose:
adapt (CL, learn a new task along an FIP anchored on the learned ones) and sparsify (Co, FIP toward a p-sparse
network followed by the hard projection).
"""
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from core_net.network import accuracy, append_output_nodes, widen_output_head
from experiments.datasets import TaskData
from experiments.run_log import RunLog
from objectives import hard_sparsify
from path_sampler import sample_path
from path_sampler.sampler import StepCallback
from shared_models.network import Batch, NetworkSpec, WeightVector
from shared_models.objective import ObjectiveSpec, RefPoint, SparsitySchedule
from shared_models.path import FIPath, PathConfig, PathProvenance, PathStep


def evaluate(spec: NetworkSpec, w: WeightVector, tasks: Iterable[TaskData], splits=("train", "test")) -> Dict[str, float]:
    """Accuracy per seen task and split, keyed "task-<id>/<split>"; tasks without a head are skipped"""
    found: Dict[str, float] = dict()
    for task in tasks:
        if spec.head_ranges and task.head_id not in spec.task_ids:
            continue
        for split in splits:
            found[f"task-{task.task_id}/{split}"] = accuracy(spec, w, getattr(task, split))
    return found


def anchor_heads(tasks: Sequence[TaskData]) -> List[int]:
    """Heads the metric is restricted to, in first-seen order"""
    return list(dict.fromkeys(task.head_id for task in tasks))


def grow_for_task(
    spec: NetworkSpec, w: WeightVector, task: TaskData, init_scale: float, seed: int
) -> Tuple[NetworkSpec, WeightVector]:
    """
    Output nodes for a new task: a fresh head when the task brings its own, otherwise the shared head is widened
    until it covers the task's global labels. A network that already fits the task is returned as is.
    """
    if task.head_id not in spec.task_ids:
        return append_output_nodes(spec, w, task.head_id, task.n_classes, init_scale, seed)
    missing = task.label_span - spec.head(task.head_id).width
    if missing > 0:
        return widen_output_head(spec, w, task.head_id, missing, init_scale, seed)
    return spec, w


def anchor_batch(tasks: Sequence[TaskData]) -> Batch:
    """Unlabelled union of the tasks' training inputs, the data the metric is anchored on"""
    return Batch(inputs=np.concatenate([task.train.inputs for task in tasks]))


def provenance_for(cfg: PathConfig, tasks: Sequence[TaskData], **notes) -> PathProvenance:
    return PathProvenance(seeds={"path": cfg.seed}, dataset_ids=[task.name for task in tasks], notes=notes)


def step_recorder(
    run_log: RunLog, phase: str, spec: NetworkSpec, w0: WeightVector, tasks: Sequence[TaskData]
) -> StepCallback:
    """Logs one path-step record per step with the accuracies of every task the network has a head for"""
    def on_step(step: PathStep):
        run_log.log(
            phase, "path-step", phase_step=step.t,
            accuracies=evaluate(spec, step.w, tasks),
            losses={"secondary": step.secondary_loss},
            g_norm_sq=step.g_norm_sq,
            distance_from_w0=float(np.linalg.norm(step.w.values - w0.values)),
            values={
                "obj_alignment": step.obj_alignment,
                "candidate_index": step.diagnostics.candidate_index,
                "accepted_iters": step.diagnostics.accepted_iters,
            },
        )
    return on_step


def adapt_to_task(
    spec: NetworkSpec,
    w: WeightVector,
    task: TaskData,
    learned: Sequence[TaskData],
    cfg: PathConfig,
    head_init_scale: float,
    head_seed: int,
    run_log: Optional[RunLog] = None,
    phase: Optional[str] = None,
    keep_zeros: bool = False,
) -> Tuple[NetworkSpec, FIPath]:
    """
    CL: grow output nodes for `task` if needed, then follow an FIP driven by its loss, anchored on `learned`.
    keep_zeros freezes the exact zeros of w (a sparsified network stays sparse); grown output nodes stay free.
    """
    frozen = None
    if keep_zeros:
        zeros = WeightVector.for_spec(spec, (w.values == 0.0).astype(np.float64))
        frozen = grow_for_task(spec, zeros, task, 0.0, head_seed)[1].values > 0.0
    spec, w = grow_for_task(spec, w, task, head_init_scale, head_seed)
    phase = phase or f"fip/task-{task.task_id}"
    on_step = None if run_log is None else step_recorder(run_log, phase, spec, w, [*learned, task])
    path = sample_path(
        spec, w, anchor_batch(learned), ObjectiveSpec.task_loss(task.train), cfg,
        anchor_task_ids=anchor_heads(learned),
        provenance=provenance_for(cfg, [*learned, task], operation="adapt", task_id=task.task_id),
        on_step=on_step,
        frozen=frozen,
    )
    return spec, path


def sparsify_network(
    spec: NetworkSpec,
    w: WeightVector,
    p: float,
    learned: Sequence[TaskData],
    cfg: PathConfig,
    ref_point: RefPoint = RefPoint.CURRENT,
    schedule: SparsitySchedule = SparsitySchedule.LINEAR,
    include_biases: bool = True,
    run_log: Optional[RunLog] = None,
    phase: Optional[str] = None,
) -> Tuple[WeightVector, float, Optional[FIPath]]:
    """
    Co: FIP toward the p-sparse set anchored on `learned`, then the hard p-sparse projection.
    p = 0 is the identity: no path is sampled.
    """
    if p == 0.0:
        projected, achieved = hard_sparsify(spec, w, 0.0, include_biases)
        return projected, achieved, None
    phase = phase or f"sparsify/p={p:g}"
    on_step = None if run_log is None else step_recorder(run_log, phase, spec, w, learned)
    path = sample_path(
        spec, w, anchor_batch(learned), ObjectiveSpec.sparsify(p, ref_point, schedule, include_biases), cfg,
        anchor_task_ids=anchor_heads(learned) if spec.head_ranges else None,
        provenance=provenance_for(cfg, learned, operation="sparsify", p=p),
        on_step=on_step,
    )
    projected, achieved = hard_sparsify(spec, path.endpoint, p, include_biases)
    logger.info(f"Sparsified to p={p}: achieved {achieved:.4f}, moved {path.displacement():.4e} before projection")
    return projected, achieved, path


def trajectory(path: FIPath) -> np.ndarray:
    """Start point plus every recorded step, one row each"""
    rows: List[np.ndarray] = [path.start.values]
    rows.extend(step.w.values for step in path.recorded_steps())
    return np.stack(rows)
