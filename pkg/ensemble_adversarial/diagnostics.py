"""
Coherence and representation diversity.

coherence: mean cosine between a member's and the surrogate's input gradients of the cross-entropy.
diversity: mean over inputs and member pairs of (1 - cosine) between hidden activations at one layer.
Cosine between two zero vectors is taken as 1, between a zero and a nonzero vector as 0.
"""
from itertools import combinations
from typing import Tuple

import numpy as np
from loguru import logger
from sklearn.metrics.pairwise import paired_cosine_distances

from core_net.network import hidden_activations, input_gradient
from shared_models.ensemble import Ensemble
from shared_models.errors import DimensionMismatchError, ZeroGradientError
from shared_models.network import Batch, NetworkSpec, WeightVector

Model = Tuple[NetworkSpec, WeightVector]


def paired_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity with the zero-vector convention above"""
    similarity = 1.0 - paired_cosine_distances(a, b)
    zero_a = ~np.any(a, axis=1)
    zero_b = ~np.any(b, axis=1)
    similarity[zero_a & zero_b] = 1.0
    similarity[zero_a ^ zero_b] = 0.0
    return similarity


def coherence_score(member: Model, surrogate: Model, batch: Batch) -> float:
    member_spec, member_w = member
    surrogate_spec, surrogate_w = surrogate
    if member_spec.input_dim != surrogate_spec.input_dim:
        raise DimensionMismatchError(
            f"Member takes {member_spec.input_dim} inputs, surrogate takes {surrogate_spec.input_dim}", layer=0
        )
    grad_member = input_gradient(member_spec, member_w, batch)
    grad_surrogate = input_gradient(surrogate_spec, surrogate_w, batch)
    usable = np.any(grad_member, axis=1) & np.any(grad_surrogate, axis=1)
    skipped = int(np.count_nonzero(~usable))
    if skipped == batch.size:
        raise ZeroGradientError("Every input has a zero input gradient; coherence is undefined", skipped=skipped)
    if skipped:
        logger.warning(f"Coherence: skipped {skipped} of {batch.size} inputs with zero input gradient")
    return float(np.mean(paired_cosine(grad_member[usable], grad_surrogate[usable])))


def diversity_score(ens: Ensemble, layer_index: int, batch: Batch) -> float:
    if ens.size == 1:
        return 0.0
    acts = [hidden_activations(ens.spec, w, batch.inputs, layer_index) for w in ens.members]
    dissimilarity = [np.mean(1.0 - paired_cosine(acts[i], acts[j])) for i, j in combinations(range(ens.size), 2)]
    return float(np.mean(dissimilarity))
