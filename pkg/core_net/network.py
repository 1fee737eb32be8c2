"""
Minimal differentiable feedforward engine over a flat weight vector.

Flat layout, per affine layer i in order: W_i (dims[i+1] x dims[i], row-major) followed by b_i (dims[i+1]).
Everything is float64. Batch reductions go through fixed-shape matmuls so reruns are bit-identical.
"""
from __future__ import annotations

from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.special import log_softmax

from core_net import activations
from core_net.confs import EngineConf
from shared_models.errors import CapExceededError, DimensionMismatchError, InvalidLayerError
from shared_models.network import Batch, NetworkSpec, WeightVector

Layer = Tuple[np.ndarray, Optional[np.ndarray]]


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross-entropy"
    MSE = "mean-squared-error"


class ForwardTrace(NamedTuple):
    """Pre-activations z_l and activations h_l of one forward pass; post[0] is the input."""
    layers: List[Layer]
    pre: List[np.ndarray]
    post: List[np.ndarray]

    @property
    def outputs(self) -> np.ndarray:
        return self.post[-1]


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Layout    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def unflatten(spec: NetworkSpec, values: np.ndarray) -> List[Layer]:
    if values.shape[0] != spec.param_count:
        raise DimensionMismatchError(
            f"Flat vector has {values.shape[0]} entries, spec needs {spec.param_count}",
            expected=spec.param_count, got=values.shape[0],
        )
    layers: List[Layer] = []
    offset = 0
    for d_in, d_out in zip(spec.layer_dims, spec.layer_dims[1:]):
        weight = values[offset:offset + d_in * d_out].reshape(d_out, d_in)
        offset += d_in * d_out
        bias = None
        if spec.use_bias:
            bias = values[offset:offset + d_out]
            offset += d_out
        layers.append((weight, bias))
    return layers


def flatten(layers: Sequence[Layer]) -> np.ndarray:
    parts = []
    for weight, bias in layers:
        parts.append(weight.reshape(-1))
        if bias is not None:
            parts.append(bias)
    return np.concatenate(parts)


def init_weights(spec: NetworkSpec, seed: int, gain: float = 1.0) -> WeightVector:
    """Glorot-uniform weights and zero biases"""
    rng = np.random.default_rng(seed)
    layers: List[Layer] = []
    for d_in, d_out in zip(spec.layer_dims, spec.layer_dims[1:]):
        limit = gain * np.sqrt(6.0 / (d_in + d_out))
        weight = rng.uniform(-limit, limit, size=(d_out, d_in))
        bias = np.zeros(d_out) if spec.use_bias else None
        layers.append((weight, bias))
    return WeightVector.for_spec(spec, flatten(layers))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Forward    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def _affine(weight: np.ndarray, bias: Optional[np.ndarray], h: np.ndarray, exact_rows: bool) -> np.ndarray:
    if exact_rows:
        # Every output row is reduced on its own, so appending rows never changes existing ones
        z = (h[:, None, :] * weight[None, :, :]).sum(axis=-1)
    else:
        z = h @ weight.T
    if bias is not None:
        z = z + bias
    return z


def _as_inputs(spec: NetworkSpec, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != spec.input_dim:
        raise DimensionMismatchError(
            f"Input rows have shape {arr.shape}, layer 0 expects length {spec.input_dim}",
            layer=0, expected=spec.input_dim, got=list(arr.shape),
        )
    return arr


def forward_trace(spec: NetworkSpec, w: WeightVector, inputs: np.ndarray) -> ForwardTrace:
    w.check(spec)
    h = _as_inputs(spec, inputs)
    layers = unflatten(spec, w.values)
    pre: List[np.ndarray] = []
    post: List[np.ndarray] = [h]
    last = len(layers) - 1
    for idx, ((weight, bias), act) in enumerate(zip(layers, spec.activations)):
        z = _affine(weight, bias, h, exact_rows=idx == last)
        h = activations.apply(act, z)
        pre.append(z)
        post.append(h)
    return ForwardTrace(layers=layers, pre=pre, post=post)


def forward_batch(spec: NetworkSpec, w: WeightVector, inputs: np.ndarray) -> np.ndarray:
    return forward_trace(spec, w, inputs).outputs


def forward(spec: NetworkSpec, w: WeightVector, x: np.ndarray) -> np.ndarray:
    """Raw (pre-softmax) outputs of the last layer for a single input row"""
    return forward_batch(spec, w, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def hidden_activations(spec: NetworkSpec, w: WeightVector, inputs: np.ndarray, layer_index: int) -> np.ndarray:
    """Activations after hidden layer `layer_index` (1 = first hidden layer)"""
    if not 1 <= layer_index <= spec.n_layers - 1:
        raise InvalidLayerError(
            f"layer_index {layer_index} is not a hidden layer (valid: 1..{spec.n_layers - 1})",
            layer=layer_index,
        )
    return forward_trace(spec, w, inputs).post[layer_index]


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Linearisation    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def jvp_trace(spec: NetworkSpec, trace: ForwardTrace, dw: np.ndarray) -> np.ndarray:
    """Rows J(x_i)·dw for every input of the trace (N x m)"""
    dlayers = unflatten(spec, np.asarray(dw, dtype=np.float64).reshape(-1))
    dh = np.zeros_like(trace.post[0])
    for idx, ((weight, _), (dweight, dbias), act) in enumerate(zip(trace.layers, dlayers, spec.activations)):
        dz = trace.post[idx] @ dweight.T + dh @ weight.T
        if dbias is not None:
            dz = dz + dbias
        dh = activations.derivative(act, trace.pre[idx]) * dz
    return dh


def _backward(spec: NetworkSpec, trace: ForwardTrace, cotangent: np.ndarray, want_input: bool = False):
    """Sum over the batch of J(x_i)^T v_i, plus the per-row input gradient when asked for."""
    n_layers = len(trace.layers)
    grads: List[Layer] = [None] * n_layers
    delta = cotangent * activations.derivative(spec.activations[-1], trace.pre[-1])
    input_grad = None
    for idx in reversed(range(n_layers)):
        weight, bias = trace.layers[idx]
        grad_w = delta.T @ trace.post[idx]
        grad_b = delta.sum(axis=0) if bias is not None else None
        grads[idx] = (grad_w, grad_b)
        if idx > 0:
            delta = (delta @ weight) * activations.derivative(spec.activations[idx - 1], trace.pre[idx - 1])
        elif want_input:
            input_grad = delta @ weight
    return flatten(grads), input_grad


def vjp_trace(spec: NetworkSpec, trace: ForwardTrace, cotangent: np.ndarray) -> np.ndarray:
    cot = np.asarray(cotangent, dtype=np.float64)
    if cot.shape != trace.outputs.shape:
        raise DimensionMismatchError(
            f"Cotangent has shape {cot.shape}, outputs have shape {trace.outputs.shape}",
            layer=spec.n_layers, expected=list(trace.outputs.shape), got=list(cot.shape),
        )
    return _backward(spec, trace, cot)[0]


def jvp(spec: NetworkSpec, w: WeightVector, x: np.ndarray, dw: np.ndarray) -> np.ndarray:
    dw = np.asarray(dw, dtype=np.float64).reshape(-1)
    if dw.shape[0] != spec.param_count:
        raise DimensionMismatchError(
            f"Tangent has {dw.shape[0]} entries, spec needs {spec.param_count}",
            expected=spec.param_count, got=dw.shape[0],
        )
    return jvp_trace(spec, forward_trace(spec, w, x), dw)[0]


def vjp(spec: NetworkSpec, w: WeightVector, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(1, -1)
    return vjp_trace(spec, forward_trace(spec, w, x), v)


def per_sample_jacobian(
    spec: NetworkSpec, w: WeightVector, inputs: np.ndarray, rows: Optional[Sequence[int]] = None,
    cap: Optional[int] = None,
) -> np.ndarray:
    """Stack of Jacobians restricted to output `rows`: shape N x len(rows) x n"""
    trace = forward_trace(spec, w, inputs)
    rows = list(range(spec.output_dim)) if rows is None else list(rows)
    n_samples = trace.post[0].shape[0]
    cap = EngineConf().jacobian_cap if cap is None else cap
    entries = n_samples * len(rows) * spec.param_count
    if entries > cap:
        raise CapExceededError(
            f"Materializing {entries} Jacobian entries exceeds the cap of {cap}; use jvp/vjp instead",
            entries=entries, cap=cap,
        )
    jac = np.zeros((n_samples, len(rows), spec.param_count))
    n_layers = len(trace.layers)
    for r_idx, row in enumerate(rows):
        delta = np.zeros_like(trace.outputs)
        delta[:, row] = 1.0
        delta = delta * activations.derivative(spec.activations[-1], trace.pre[-1])
        per_layer: List[np.ndarray] = [None] * n_layers
        for idx in reversed(range(n_layers)):
            weight, bias = trace.layers[idx]
            parts = [np.einsum("no,ni->noi", delta, trace.post[idx]).reshape(n_samples, -1)]
            if bias is not None:
                parts.append(delta)
            per_layer[idx] = np.concatenate(parts, axis=1)
            if idx > 0:
                delta = (delta @ weight) * activations.derivative(spec.activations[idx - 1], trace.pre[idx - 1])
        jac[:, r_idx, :] = np.concatenate(per_layer, axis=1)
    return jac


def output_jacobian(spec: NetworkSpec, w: WeightVector, x: np.ndarray, cap: Optional[int] = None) -> np.ndarray:
    """m x n Jacobian of the raw outputs at a single input"""
    return per_sample_jacobian(spec, w, np.asarray(x, dtype=np.float64).reshape(1, -1), cap=cap)[0]


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Losses    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def _loss_cotangent(spec: NetworkSpec, outputs: np.ndarray, batch: Batch, loss: LossKind) -> Tuple[float, np.ndarray]:
    """Mean loss over the batch and dLoss/dOutputs (N x m), zero outside the batch's head"""
    labels = batch.require_labels()
    batch.check_for(spec)
    head = spec.head(batch.task_id).as_slice()
    n_samples = outputs.shape[0]
    logits = outputs[:, head]
    onehot = np.zeros_like(logits)
    onehot[np.arange(n_samples), labels] = 1.0
    cotangent = np.zeros_like(outputs)
    if loss is LossKind.CROSS_ENTROPY:
        # Softmax restricted to this head, never across heads
        log_probs = log_softmax(logits, axis=1)
        value = -float(np.mean(log_probs[np.arange(n_samples), labels]))
        cotangent[:, head] = (np.exp(log_probs) - onehot) / n_samples
    else:
        residual = logits - onehot
        value = float(np.mean(residual ** 2))
        cotangent[:, head] = 2.0 * residual / residual.size
    return value, cotangent


def loss_and_grad(
    spec: NetworkSpec, w: WeightVector, batch: Batch, loss: LossKind = LossKind.CROSS_ENTROPY
) -> Tuple[float, np.ndarray]:
    trace = forward_trace(spec, w, batch.inputs)
    value, cotangent = _loss_cotangent(spec, trace.outputs, batch, loss)
    return value, _backward(spec, trace, cotangent)[0]


def input_gradient(spec: NetworkSpec, w: WeightVector, batch: Batch) -> np.ndarray:
    """Per-row gradient of that row's cross-entropy (over the batch's head) with respect to the input"""
    trace = forward_trace(spec, w, batch.inputs)
    _, cotangent = _loss_cotangent(spec, trace.outputs, batch, LossKind.CROSS_ENTROPY)
    # Undo the batch mean so each row carries its own loss gradient
    cotangent = cotangent * batch.size
    return _backward(spec, trace, cotangent, want_input=True)[1]


def predict(spec: NetworkSpec, w: WeightVector, inputs: np.ndarray, task_id: int) -> np.ndarray:
    """Local class index (argmax over the task head, lowest index on ties)"""
    outputs = forward_batch(spec, w, inputs)
    return np.argmax(outputs[:, spec.head(task_id).as_slice()], axis=1)


def accuracy(spec: NetworkSpec, w: WeightVector, batch: Batch) -> float:
    labels = batch.require_labels()
    return float(np.mean(predict(spec, w, batch.inputs, batch.task_id) == labels))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Surgery    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def _grow_outputs(
    spec: NetworkSpec, new_spec: NetworkSpec, w: WeightVector, count: int, init_scale: float, seed: int
) -> WeightVector:
    """Appends `count` output rows: weights ~ U(-init_scale, init_scale) under `seed`, biases 0"""
    layers = [(weight.copy(), None if bias is None else bias.copy()) for weight, bias in unflatten(spec, w.values)]
    weight, bias = layers[-1]
    rng = np.random.default_rng(seed)
    new_rows = rng.uniform(-init_scale, init_scale, size=(count, weight.shape[1])) if init_scale > 0 \
        else np.zeros((count, weight.shape[1]))
    weight = np.vstack([weight, new_rows])
    if bias is not None:
        bias = np.concatenate([bias, np.zeros(count)])
    layers[-1] = (weight, bias)
    return WeightVector.for_spec(new_spec, flatten(layers))


def append_output_nodes(
    spec: NetworkSpec, w: WeightVector, new_task_id: int, count: int, init_scale: float, seed: int
) -> Tuple[NetworkSpec, WeightVector]:
    """
    Grows the output layer by `count` rows registered as the head of new_task_id.
    New weights ~ U(-init_scale, init_scale) under `seed`, new biases 0. Existing rows are copied untouched.
    """
    if count < 1:
        raise InvalidLayerError(f"count must be >= 1, got {count}", layer=spec.n_layers)
    w.check(spec)
    new_spec = spec.with_appended_head(new_task_id, count)
    grown = _grow_outputs(spec, new_spec, w, count, init_scale, seed)
    logger.info(
        f"Appended {count} output nodes for task {new_task_id}: "
        f"n {spec.param_count} -> {new_spec.param_count}, m {spec.output_dim} -> {new_spec.output_dim}"
    )
    return new_spec, grown


def widen_output_head(
    spec: NetworkSpec, w: WeightVector, task_id: int, count: int, init_scale: float, seed: int
) -> Tuple[NetworkSpec, WeightVector]:
    """
    Class-incremental growth: the last head (owned by task_id) gains `count` output rows, so its argmax and
    softmax now range over the old and the new classes together. Initialisation as in append_output_nodes.
    """
    if count < 1:
        raise InvalidLayerError(f"count must be >= 1, got {count}", layer=spec.n_layers)
    w.check(spec)
    new_spec = spec.with_widened_head(task_id, count)
    grown = _grow_outputs(spec, new_spec, w, count, init_scale, seed)
    logger.info(
        f"Widened the head of task {task_id} by {count} outputs: "
        f"width {spec.head(task_id).width} -> {new_spec.head(task_id).width}"
    )
    return new_spec, grown
