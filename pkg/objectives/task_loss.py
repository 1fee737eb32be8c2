from typing import Optional, Tuple

import numpy as np

from core_net.network import LossKind, loss_and_grad
from objectives.base_objective import SecondaryObjective
from shared_models.network import NetworkSpec, WeightVector
from shared_models.objective import ObjectiveSpec


class TaskLossObjective(SecondaryObjective):
    """Cross-entropy of a new task over that task's own head"""
    spec: ObjectiveSpec

    def __init__(self, spec: ObjectiveSpec):
        self.spec = spec

    def evaluate(
        self, net: NetworkSpec, w: WeightVector, w_ref: Optional[WeightVector] = None
    ) -> Tuple[float, Optional[np.ndarray]]:
        return loss_and_grad(net, w, self.spec.task_batch, LossKind.CROSS_ENTROPY)
