from typing import Optional, Tuple

import numpy as np

from objectives.base_objective import SecondaryObjective
from shared_models.network import NetworkSpec, WeightVector
from shared_models.objective import ObjectiveSpec


class NullObjective(SecondaryObjective):
    """L = 0: the path only minimises output velocity"""
    spec: ObjectiveSpec

    def __init__(self, spec: ObjectiveSpec):
        self.spec = spec

    def evaluate(
        self, net: NetworkSpec, w: WeightVector, w_ref: Optional[WeightVector] = None
    ) -> Tuple[float, Optional[np.ndarray]]:
        return 0.0, None
