from typing import Dict, Optional, Tuple

import numpy as np
from loguru import logger

from experiments.checkpoints import load_checkpoint, save_checkpoint
from experiments.datasets import TaskData
from experiments.operators import evaluate
from experiments.output_dir import OutputDir
from experiments.plotdata import emit_plotdata
from experiments.run_log import RunLog
from experiments.training import train_base
from path_sampler import save_path
from shared_models.checkpoint import AppliedOperation, Checkpoint
from shared_models.errors import DimensionMismatchError
from shared_models.experiment_config import ExperimentConfig
from shared_models.network import NetworkSpec, WeightVector
from shared_models.path import FIPath


def open_run_log(cfg: ExperimentConfig, out: Optional[OutputDir]) -> RunLog:
    return RunLog(cfg.resolved_run_id, None if out is None else out.run_log_path)


def base_spec(cfg: ExperimentConfig, task: TaskData) -> NetworkSpec:
    return NetworkSpec.mlp(
        [task.train.input_dim, *cfg.network.hidden_dims, task.n_classes],
        hidden=cfg.network.hidden_activation,
        head_widths=[task.n_classes],
        first_task_id=task.task_id,
        use_bias=cfg.network.use_bias,
    )


def prepare_base(
    cfg: ExperimentConfig, task: TaskData, run_log: RunLog, out: Optional[OutputDir]
) -> Tuple[NetworkSpec, WeightVector, Checkpoint]:
    """The trained starting network: loaded from cfg.base_checkpoint or trained on `task`"""
    if cfg.base_checkpoint is not None:
        ckpt = load_checkpoint(cfg.base_checkpoint)
        spec, w = ckpt.spec, ckpt.weights
        if spec.input_dim != task.train.input_dim:
            raise DimensionMismatchError(
                f"Base checkpoint expects {spec.input_dim} inputs, task {task.task_id} has {task.train.input_dim}",
                layer=0,
            )
        logger.info(f"Base network loaded from {cfg.base_checkpoint} ({ckpt.checksum})")
    else:
        spec = base_spec(cfg, task)
        w, _ = train_base(spec, task.train, cfg.training, task.test, run_log=run_log, phase="base")
        link = AppliedOperation(operation="train-base", params=cfg.training.model_dump())
        ckpt = Checkpoint.create(spec, w, provenance=[link], run_id=cfg.resolved_run_id)
    run_log.log("base", "eval", accuracies=evaluate(spec, w, [task]))
    if out is not None:
        save_checkpoint(ckpt, out.checkpoints.joinpath("base.fipc"))
    return spec, w, ckpt


def persist_path(out: Optional[OutputDir], name: str, path: FIPath):
    if out is not None:
        save_path(path, out.paths.joinpath(name))


def persist_weights(out: Optional[OutputDir], parent: Checkpoint, name: str, operation: str,
                    spec: NetworkSpec, w: WeightVector, **params) -> Checkpoint:
    ckpt = parent.derive(operation, spec, w, **params)
    if out is not None:
        save_checkpoint(ckpt, out.checkpoints.joinpath(f"{name}.fipc"))
    return ckpt


def finish(cfg: ExperimentConfig, run_log: RunLog, out: Optional[OutputDir],
           trajectories: Optional[Dict[str, np.ndarray]] = None) -> RunLog:
    if out is not None:
        emit_plotdata(run_log, cfg.kind, out.plotdata, trajectories)
    logger.info(f"━━━━━━ Run {run_log.run_id} finished: {len(run_log)} records ━━━━━━")
    return run_log
