"""
Weight-space metric g_w(X) = mean_i J(x_i)^T J(x_i).

Everything the path solver needs is matrix-free (one jvp for q, one jvp+vjp for G·dw). The dense matrix
and its spectrum are only built for small n.
"""
from __future__ import annotations

from functools import cached_property
from typing import List, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.linalg import eigh
from scipy.special import softmax

from core_net.confs import EngineConf
from core_net.network import ForwardTrace, forward_batch, forward_trace, jvp_trace, per_sample_jacobian, vjp_trace
from shared_models.metric import OutputMode, SpectrumReport
from shared_models.errors import CapExceededError, DimensionMismatchError, EmptyBatchError, NonFiniteError, \
    NotPositiveSemidefiniteError
from shared_models.network import Batch, NetworkSpec, WeightVector

PSD_SLACK = 1e-9


class MetricEvaluation(BaseModel):
    """
    Handle on g_w(X) for one (spec, w, batch).
    output_rows restricts the metric to a subset of output coordinates (e.g. previously learned heads);
    None means every output.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: NetworkSpec
    w: WeightVector
    batch: Batch
    output_mode: OutputMode = OutputMode.PRE_SOFTMAX
    output_rows: Optional[List[int]] = None

    @model_validator(mode="after")
    def check_shapes(self) -> MetricEvaluation:
        self.w.check(self.spec)
        if self.batch.input_dim != self.spec.input_dim:
            raise DimensionMismatchError(
                f"Metric batch rows have length {self.batch.input_dim}, layer 0 expects {self.spec.input_dim}",
                layer=0,
            )
        if self.output_rows is not None:
            if len(self.output_rows) == 0:
                raise EmptyBatchError("Metric restricted to an empty set of output rows")
            if min(self.output_rows) < 0 or max(self.output_rows) >= self.spec.output_dim:
                raise DimensionMismatchError(
                    f"output_rows {self.output_rows} outside [0, {self.spec.output_dim})", layer=self.spec.n_layers
                )
        return self

    @cached_property
    def trace(self) -> ForwardTrace:
        return forward_trace(self.spec, self.w, self.batch.inputs)

    @cached_property
    def rows(self) -> np.ndarray:
        if self.output_rows is None:
            return np.arange(self.spec.output_dim)
        return np.asarray(sorted(set(self.output_rows)), dtype=np.int64)

    @cached_property
    def head_probs(self) -> np.ndarray:
        """Per-head softmax of the outputs (post-softmax mode only)"""
        probs = np.zeros_like(self.trace.outputs)
        for head in self._heads():
            probs[:, head] = softmax(self.trace.outputs[:, head], axis=1)
        return probs

    def _heads(self) -> List[slice]:
        if not self.spec.head_ranges:
            return [slice(0, self.spec.output_dim)]
        return [head.as_slice() for head in self.spec.head_ranges]

    def _softmax_jacobian_apply(self, tangent: np.ndarray) -> np.ndarray:
        # d softmax = s * (dy - <s, dy>) per head; the map is symmetric so it also serves the adjoint
        out = np.zeros_like(tangent)
        probs = self.head_probs
        for head in self._heads():
            s = probs[:, head]
            dy = tangent[:, head]
            out[:, head] = s * (dy - np.sum(s * dy, axis=1, keepdims=True))
        return out

    @property
    def size(self) -> int:
        return self.batch.size

    def output_tangent(self, dw: np.ndarray) -> np.ndarray:
        """Rows J(x_i)·dw restricted to the metric's output rows (N x |rows|)"""
        dw = np.asarray(dw, dtype=np.float64).reshape(-1)
        if dw.shape[0] != self.spec.param_count:
            raise DimensionMismatchError(
                f"Perturbation has {dw.shape[0]} entries, spec needs {self.spec.param_count}",
                expected=self.spec.param_count, got=dw.shape[0],
            )
        tangent = jvp_trace(self.spec, self.trace, dw)
        if self.output_mode is OutputMode.POST_SOFTMAX:
            tangent = self._softmax_jacobian_apply(tangent)
        return tangent[:, self.rows]

    def output_distance_sq(self, dw: np.ndarray) -> float:
        tangent = self.output_tangent(dw)
        return float(np.sum(tangent * tangent) / self.size)

    def apply_metric(self, dw: np.ndarray) -> np.ndarray:
        """G·dw = mean_i J_i^T (J_i dw), never materializing G"""
        restricted = self.output_tangent(dw)
        cotangent = np.zeros_like(self.trace.outputs)
        cotangent[:, self.rows] = restricted
        if self.output_mode is OutputMode.POST_SOFTMAX:
            cotangent = self._softmax_jacobian_apply(cotangent)
        return vjp_trace(self.spec, self.trace, cotangent) / self.size

    def jacobian_stack(self) -> np.ndarray:
        """N x |rows| x n stack of per-sample Jacobians in the metric's output mode"""
        n = self.spec.param_count
        cap = max(EngineConf().jacobian_cap, self.size * self.spec.output_dim * n)
        jac = per_sample_jacobian(self.spec, self.w, self.batch.inputs, cap=cap)
        if self.output_mode is OutputMode.POST_SOFTMAX:
            probs = self.head_probs
            transformed = np.zeros_like(jac)
            for head in self._heads():
                s = probs[:, head]
                block = jac[:, head, :]
                mean_row = np.einsum("nh,nhi->ni", s, block)
                transformed[:, head, :] = s[:, :, None] * (block - mean_row[:, None, :])
            jac = transformed
        return jac[:, self.rows, :]


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Operations    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def output_distance_sq(me: MetricEvaluation, dw: np.ndarray) -> float:
    return me.output_distance_sq(dw)


def metric_matrix(me: MetricEvaluation, cap: Optional[int] = None) -> np.ndarray:
    n = me.spec.param_count
    cap = EngineConf().dense_metric_cap if cap is None else cap
    if n > cap:
        raise CapExceededError(
            f"Dense metric needs n <= {cap}, network has n = {n}; use output_distance_sq / apply_metric",
            n=n, cap=cap,
        )
    flat = me.jacobian_stack().reshape(-1, n)
    gram = flat.T @ flat / me.size
    return 0.5 * (gram + gram.T)


def metric_spectrum(me: MetricEvaluation, tol_rel: float = 1e-6, cap: Optional[int] = None) -> SpectrumReport:
    gram = metric_matrix(me, cap=cap)
    if not np.all(np.isfinite(gram)):
        raise NonFiniteError("Metric matrix has non-finite entries")
    eigenvalues = eigh(gram, eigvals_only=True)[::-1]
    lambda_max = float(eigenvalues[0])
    if eigenvalues[-1] < -PSD_SLACK * max(lambda_max, 0.0):
        raise NotPositiveSemidefiniteError(
            f"Smallest eigenvalue {eigenvalues[-1]:.3e} is below the PSD slack", lambda_min=float(eigenvalues[-1]),
            lambda_max=lambda_max,
        )
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    if lambda_max <= 0.0:
        degeneracy_dim = len(eigenvalues)
    else:
        degeneracy_dim = int(np.sum(eigenvalues < tol_rel * lambda_max))
    logger.info(
        f"Metric spectrum: n={len(eigenvalues)} N={me.size} lambda_max={lambda_max:.4e} "
        f"degeneracy_dim={degeneracy_dim} (tol_rel={tol_rel})"
    )
    return SpectrumReport(
        eigenvalues=eigenvalues.tolist(),
        degeneracy_dim=degeneracy_dim,
        tol_rel=tol_rel,
        n=len(eigenvalues),
        N=me.size,
    )


def fd_output_distance(
    spec: NetworkSpec, w: WeightVector, batch: Batch, dw: np.ndarray, h: float,
    rows: Optional[List[int]] = None,
) -> float:
    """(1/N) sum_i ||f(x_i, w + h dw) - f(x_i, w)||^2 / h^2, the first-order finite difference oracle"""
    if h <= 0:
        raise ValueError(f"Finite difference step must be > 0, got {h}")
    dw = np.asarray(dw, dtype=np.float64).reshape(-1)
    shifted = WeightVector.for_spec(spec, w.values + h * dw)
    delta = forward_batch(spec, shifted, batch.inputs) - forward_batch(spec, w, batch.inputs)
    if rows is not None:
        delta = delta[:, rows]
    return float(np.sum(delta * delta) / batch.size / (h * h))


def anchor_subsample(batch: Batch, size: int, seed: int) -> Batch:
    anchor = batch.subsample(size, seed)
    if anchor.size < batch.size:
        logger.info(f"Metric anchor batch: {anchor.size} of {batch.size} rows (seed={seed})")
    return anchor
