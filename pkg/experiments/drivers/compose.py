from typing import Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from experiments.datasets import TaskData, build_tasks
from experiments.drivers.base import finish, open_run_log, persist_weights, prepare_base
from experiments.operators import adapt_to_task, evaluate, sparsify_network
from experiments.output_dir import OutputDir
from experiments.run_log import RunLog
from shared_models.experiment_config import ExperimentConfig
from shared_models.network import NetworkSpec, WeightVector


class Composition(BaseModel):
    """Endpoints of Co(CL(w)) and CL(Co(w)); both share the NetworkSpec grown with the task-B head"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: NetworkSpec
    adapt_then_sparsify: WeightVector
    sparsify_then_adapt: WeightVector
    sparsity_adapt_then_sparsify: float
    sparsity_sparsify_then_adapt: float

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.adapt_then_sparsify.values - self.sparsify_then_adapt.values))

    @property
    def relative_distance(self) -> float:
        return self.distance / float(np.linalg.norm(self.adapt_then_sparsify.values))


def zero_fraction(w: WeightVector) -> float:
    return float(np.count_nonzero(w.values == 0.0) / w.n)


def adapt(
    cfg: ExperimentConfig, spec: NetworkSpec, w: WeightVector, task_a: TaskData, task_b: TaskData,
    keep_zeros: bool = False,
):
    spec_b, path = adapt_to_task(
        spec, w, task_b, [task_a], cfg.path, cfg.compose.head_init_scale, head_seed=cfg.seed + task_b.task_id,
        keep_zeros=keep_zeros,
    )
    return spec_b, path.endpoint


def sparsify(cfg: ExperimentConfig, spec: NetworkSpec, w: WeightVector, *learned: TaskData):
    settings = cfg.compose
    w_sparse, achieved, _ = sparsify_network(
        spec, w, settings.sparsity, learned, cfg.path, settings.ref_point, settings.schedule,
    )
    return w_sparse, achieved


def compose_operators(
    cfg: ExperimentConfig, spec: NetworkSpec, w: WeightVector, task_a: TaskData, task_b: TaskData
) -> Composition:
    logger.info("━━━━━━ Composition: adapt, then sparsify ━━━━━━")
    spec_b, w_cl = adapt(cfg, spec, w, task_a, task_b)
    w1, s1 = sparsify(cfg, spec_b, w_cl, task_a, task_b)

    logger.info("━━━━━━ Composition: sparsify, then adapt ━━━━━━")
    w_co, _ = sparsify(cfg, spec, w, task_a)
    # Adapting a sparsified network keeps its pruned weights at zero
    _, w2 = adapt(cfg, spec, w_co, task_a, task_b, keep_zeros=True)
    return Composition(
        spec=spec_b, adapt_then_sparsify=w1, sparsify_then_adapt=w2,
        sparsity_adapt_then_sparsify=s1, sparsity_sparsify_then_adapt=zero_fraction(w2),
    )


def run_compose(cfg: ExperimentConfig, out: Optional[OutputDir] = None) -> RunLog:
    run_log = open_run_log(cfg, out)
    tasks = build_tasks(cfg)
    task_a, task_b = tasks[0], tasks[1]
    spec, w, ckpt = prepare_base(cfg, task_a, run_log, out)

    result = compose_operators(cfg, spec, w, task_a, task_b)
    for idx, (name, endpoint, achieved) in enumerate((
        ("adapt-then-sparsify", result.adapt_then_sparsify, result.sparsity_adapt_then_sparsify),
        ("sparsify-then-adapt", result.sparsify_then_adapt, result.sparsity_sparsify_then_adapt),
    )):
        run_log.log(f"compose/{name}", "eval", phase_step=idx,
                    accuracies=evaluate(result.spec, endpoint, [task_a, task_b]),
                    values={"achieved_sparsity": achieved})
        persist_weights(out, ckpt, name, name, result.spec, endpoint, sparsity=cfg.compose.sparsity)
    run_log.log("compose", "compose", values={
        "distance": result.distance,
        "relative_distance": result.relative_distance,
        "sparsity": cfg.compose.sparsity,
    })
    logger.info(f"Endpoints differ by {result.distance:.4e} (relative {result.relative_distance:.4e})")
    return finish(cfg, run_log, out)
