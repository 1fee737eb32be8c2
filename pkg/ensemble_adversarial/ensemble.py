import math
from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.special import softmax

from core_net.network import accuracy, forward_batch
from shared_models.ensemble import Ensemble, EnsembleSource
from shared_models.errors import InsufficientStepsError
from shared_models.network import Batch, NetworkSpec, WeightVector
from shared_models.path import FIPath


def ensemble_predict_batch(ens: Ensemble, inputs: np.ndarray, task_id: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sum over members of the softmax over the task head, accumulated in member order.
    Returns (argmax class per row, N x head_width summed scores); ties go to the lowest class index.
    """
    head = ens.spec.head(task_id).as_slice()
    summed = None
    for w in ens.members:
        probs = softmax(forward_batch(ens.spec, w, inputs)[:, head], axis=1)
        summed = probs if summed is None else summed + probs
    return np.argmax(summed, axis=1), summed


def ensemble_predict(ens: Ensemble, x: np.ndarray, task_id: int = 0) -> Tuple[int, np.ndarray]:
    predicted, summed = ensemble_predict_batch(ens, np.asarray(x, dtype=np.float64).reshape(1, -1), task_id)
    return int(predicted[0]), summed[0]


def ensemble_accuracy(ens: Ensemble, batch: Batch) -> float:
    labels = batch.require_labels()
    predicted, _ = ensemble_predict_batch(ens, batch.inputs, batch.task_id)
    return float(np.mean(predicted == labels))


def member_accuracies(ens: Ensemble, batch: Batch) -> List[float]:
    return [accuracy(ens.spec, w, batch) for w in ens.members]


def even_indices(available: int, count: int) -> List[int]:
    """count indices into range(available), evenly spaced and always ending on the last one"""
    return [int(math.floor((j + 1) * available / count + 0.5)) - 1 for j in range(count)]


def sample_ensemble_along_path(path: FIPath, count: int) -> Ensemble:
    recorded = path.recorded_steps()
    if count < 1 or count > len(recorded):
        raise InsufficientStepsError(
            f"Cannot draw {count} members from {len(recorded)} recorded steps",
            requested=count, recorded=len(recorded),
        )
    chosen = [recorded[idx] for idx in even_indices(len(recorded), count)]
    logger.info(f"Ensemble of {count} sampled at path steps {[step.t for step in chosen]}")
    return Ensemble(
        spec=path.spec,
        members=[step.w for step in chosen],
        source=EnsembleSource.FIP_PATH,
        source_steps=[step.t for step in chosen],
        stride=path.config.record_stride,
    )


def ensemble_from_checkpoints(models: Sequence[Tuple[NetworkSpec, WeightVector]]) -> Ensemble:
    if not models:
        raise InsufficientStepsError("No checkpoints to build an ensemble from", requested=0, recorded=0)
    spec = models[0][0]
    return Ensemble(spec=spec, members=[w.check(spec) for _, w in models], source=EnsembleSource.INDEPENDENT_RUNS)
