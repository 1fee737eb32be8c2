import abc
from typing import Optional, Tuple

import numpy as np

from shared_models.network import NetworkSpec, WeightVector
from shared_models.objective import ObjectiveSpec


class SecondaryObjective(abc.ABC):
    spec: ObjectiveSpec

    @abc.abstractmethod
    def __init__(self, spec: ObjectiveSpec):
        pass

    @abc.abstractmethod
    def evaluate(
        self, net: NetworkSpec, w: WeightVector, w_ref: Optional[WeightVector] = None
    ) -> Tuple[float, Optional[np.ndarray]]:
        """Returns (L, grad_w L); a None gradient means the objective does not couple to the path"""
        pass
