import math
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from shared_models.network import NetworkSpec, WeightVector


def sparse_count(n: int, p: float) -> int:
    """floor(p*n), guarded against p*n landing a rounding error below an integer"""
    return int(math.floor(p * n + 1e-9))


def project_p_sparse(values: np.ndarray, p: float, eligible: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Euclidean-closest vector with floor(p * n_eligible) eligible entries set to 0.
    The smallest magnitudes go first; among equal magnitudes the lower flat index goes first.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Sparsity fraction must be in [0, 1], got {p}")
    values = np.asarray(values, dtype=np.float64)
    candidates = np.arange(values.shape[0]) if eligible is None else np.flatnonzero(eligible)
    k = sparse_count(candidates.shape[0], p)
    projected = values.copy()
    if k == 0:
        return projected
    order = np.argsort(np.abs(values[candidates]), kind="stable")
    projected[candidates[order[:k]]] = 0.0
    return projected


def p_sparse_projection(w: WeightVector, p: float, eligible: Optional[np.ndarray] = None) -> WeightVector:
    return WeightVector(values=project_p_sparse(w.values, p, eligible), spec_hash=w.spec_hash)


def hard_sparsify(
    spec: NetworkSpec, w: WeightVector, p: float, include_biases: bool = True
) -> Tuple[WeightVector, float]:
    """
    Final projection at a path's end. Returns the projected weights and the achieved sparsity
    floor(p * n_eligible) / n: the entries the projection zeroes, whatever their value was before.
    Zeros already present outside that set are not counted.
    """
    w.check(spec)
    eligible = None if include_biases else ~spec.bias_mask()
    projected = p_sparse_projection(w, p, eligible)
    n_eligible = projected.n if eligible is None else int(np.count_nonzero(eligible))
    achieved = sparse_count(n_eligible, p) / projected.n
    logger.info(f"Hard sparsify at p={p}: achieved sparsity {achieved:.4f} over n={projected.n}")
    return projected, achieved
