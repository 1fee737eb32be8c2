from typing import Optional, Tuple

import numpy as np

from objectives.base_objective import SecondaryObjective
from objectives.projection import project_p_sparse
from shared_models.errors import InvalidObjectiveError
from shared_models.network import NetworkSpec, WeightVector
from shared_models.objective import ObjectiveSpec, RefPoint


class SparsifyObjective(SecondaryObjective):
    """
    L = ||w - P_p(w_ref)||^2, gradient 2 (w - P_p(w_ref)).
    w_ref is w itself (CURRENT) or the weights the path started from (FIXED).
    """
    spec: ObjectiveSpec

    def __init__(self, spec: ObjectiveSpec):
        self.spec = spec

    def evaluate(
        self, net: NetworkSpec, w: WeightVector, w_ref: Optional[WeightVector] = None
    ) -> Tuple[float, Optional[np.ndarray]]:
        if self.spec.ref_point is RefPoint.CURRENT:
            reference = w
        elif w_ref is None:
            raise InvalidObjectiveError("fixed-w_t sparsify objective evaluated without a reference point")
        else:
            reference = w_ref
        eligible = None if self.spec.include_biases else ~net.bias_mask()
        target = project_p_sparse(reference.values, self.spec.target_sparsity, eligible)
        residual = w.values - target
        return float(residual @ residual), 2.0 * residual
