from typing import Dict, Optional, Tuple, Type

import numpy as np

from .base_objective import SecondaryObjective
from .null import NullObjective
from .task_loss import TaskLossObjective
from .sparsify import SparsifyObjective
from .projection import p_sparse_projection, hard_sparsify, project_p_sparse, sparse_count

from shared_models.network import NetworkSpec, WeightVector
from shared_models.objective import ObjectiveKind, ObjectiveSpec


OBJECTIVE_MAP: Dict[ObjectiveKind, Type[SecondaryObjective]] = {
    ObjectiveKind.NULL: NullObjective,
    ObjectiveKind.TASK_LOSS: TaskLossObjective,
    ObjectiveKind.SPARSIFY: SparsifyObjective,
}


def objective_grad(
    obj: ObjectiveSpec, spec: NetworkSpec, w: WeightVector, w_ref: Optional[WeightVector] = None
) -> Tuple[float, Optional[np.ndarray]]:
    obj.validate_kind()
    return OBJECTIVE_MAP[obj.kind](obj).evaluate(spec, w, w_ref)
