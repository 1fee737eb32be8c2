from __future__ import annotations

import hashlib
from enum import Enum
from typing import List, Optional, Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from shared_models.errors import (
    DimensionMismatchError,
    DuplicateTaskError,
    EmptyBatchError,
    InvalidLayerError,
    LabelRangeError,
    MissingLabelsError,
    NonFiniteError,
    UnknownTaskError,
)


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"


class HeadRange(BaseModel):
    """Output coordinates [start, stop) owned by one task."""
    task_id: int
    start: int = Field(ge=0)
    stop: int = Field(ge=1)

    @property
    def width(self) -> int:
        return self.stop - self.start

    def as_slice(self) -> slice:
        return slice(self.start, self.stop)


class NetworkSpec(BaseModel):
    """
    Feedforward architecture f(x; w): R^k -> R^m.
    layer_dims = [k, hidden..., m]; activations[i] is applied after affine layer i.
    head_ranges partition a suffix of the outputs into per-task heads.
    """
    model_config = ConfigDict(frozen=True)

    layer_dims: List[int]
    activations: List[Activation]
    head_ranges: List[HeadRange] = []
    use_bias: bool = True

    @model_validator(mode="after")
    def check_architecture(self) -> NetworkSpec:
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs at least an input and an output dimension")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer_dims entries must be >= 1, got {self.layer_dims}")
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ValueError(
                f"{len(self.layer_dims) - 1} affine layers but {len(self.activations)} activation tags"
            )
        task_ids = [head.task_id for head in self.head_ranges]
        if len(set(task_ids)) != len(task_ids):
            raise ValueError(f"Duplicate task ids in head_ranges: {task_ids}")
        # Heads are contiguous, disjoint and end on the last output
        for prev, nxt in zip(self.head_ranges, self.head_ranges[1:]):
            if nxt.start != prev.stop:
                raise ValueError(f"Head {nxt.task_id} does not start where head {prev.task_id} stops")
        for head in self.head_ranges:
            if head.stop <= head.start:
                raise ValueError(f"Head {head.task_id} is empty")
        if self.head_ranges and self.head_ranges[-1].stop != self.output_dim:
            raise ValueError("head_ranges must end on the last output coordinate")
        return self

    @classmethod
    def mlp(
        cls,
        layer_dims: List[int],
        hidden: Activation = Activation.RELU,
        output: Activation = Activation.IDENTITY,
        head_widths: Optional[List[int]] = None,
        first_task_id: int = 1,
        use_bias: bool = True,
    ) -> NetworkSpec:
        activations = [hidden] * (len(layer_dims) - 2) + [output]
        heads = []
        if head_widths is not None:
            start = layer_dims[-1] - sum(head_widths)
            for offset, width in enumerate(head_widths):
                heads.append(HeadRange(task_id=first_task_id + offset, start=start, stop=start + width))
                start += width
        return NetworkSpec(layer_dims=layer_dims, activations=activations, head_ranges=heads, use_bias=use_bias)

    # ━━━━━━━━━━━━━━━━━━    Shape helpers    ━━━━━━━━━━━━━━━━━━ #
    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def param_count(self) -> int:
        bias = 1 if self.use_bias else 0
        return sum((d_in + bias) * d_out for d_in, d_out in zip(self.layer_dims, self.layer_dims[1:]))

    @property
    def spec_hash(self) -> str:
        return hashlib.md5(self.model_dump_json().encode("utf8")).hexdigest()

    @property
    def task_ids(self) -> List[int]:
        return [head.task_id for head in self.head_ranges]

    def head(self, task_id: int) -> HeadRange:
        """Head of task_id. A spec without heads exposes all outputs as a single head for any task."""
        if not self.head_ranges:
            return HeadRange(task_id=task_id, start=0, stop=self.output_dim)
        for head in self.head_ranges:
            if head.task_id == task_id:
                return head
        raise UnknownTaskError(f"Task {task_id} has no output head", task_id=task_id, known=self.task_ids)

    def rows_for_tasks(self, task_ids: Iterable[int]) -> List[int]:
        rows: List[int] = []
        for task_id in task_ids:
            head = self.head(task_id)
            rows.extend(range(head.start, head.stop))
        return sorted(set(rows))

    def with_appended_head(self, task_id: int, count: int) -> NetworkSpec:
        if task_id in self.task_ids:
            raise DuplicateTaskError(f"Task {task_id} already owns an output head", task_id=task_id)
        heads = list(self.head_ranges)
        if not heads:
            # Existing outputs become the head of an implicit task 0 unless that id is taken
            heads = [HeadRange(task_id=0 if task_id != 0 else -1, start=0, stop=self.output_dim)]
        heads.append(HeadRange(task_id=task_id, start=self.output_dim, stop=self.output_dim + count))
        return NetworkSpec(
            layer_dims=[*self.layer_dims[:-1], self.output_dim + count],
            activations=list(self.activations),
            head_ranges=heads,
            use_bias=self.use_bias,
        )

    def with_widened_head(self, task_id: int, count: int) -> NetworkSpec:
        """Extends the head of task_id by `count` outputs; only the head ending at the last output can grow"""
        head = self.head(task_id)
        if head.stop != self.output_dim:
            raise InvalidLayerError(
                f"Head of task {task_id} ends at output {head.stop} of {self.output_dim}; only the last head can grow",
                layer=self.n_layers, task_id=task_id,
            )
        heads = [h if h.task_id != task_id else HeadRange(task_id=task_id, start=h.start, stop=h.stop + count)
                 for h in self.head_ranges] or [HeadRange(task_id=task_id, start=0, stop=self.output_dim + count)]
        return NetworkSpec(
            layer_dims=[*self.layer_dims[:-1], self.output_dim + count],
            activations=list(self.activations),
            head_ranges=heads,
            use_bias=self.use_bias,
        )

    def bias_mask(self) -> np.ndarray:
        """Boolean mask over the flat weight vector, True where the entry is a bias."""
        mask = np.zeros(self.param_count, dtype=bool)
        if not self.use_bias:
            return mask
        offset = 0
        for d_in, d_out in zip(self.layer_dims, self.layer_dims[1:]):
            offset += d_in * d_out
            mask[offset:offset + d_out] = True
            offset += d_out
        return mask


class WeightVector(BaseModel):
    """Flat, finite, read-only parameter vector bound to a NetworkSpec by hash."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    spec_hash: str

    @field_validator("values", mode="before")
    @classmethod
    def as_finite_array(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise NonFiniteError("Weight vector has non-finite entries", first_index=bad)
        arr.flags.writeable = False
        return arr

    @classmethod
    def for_spec(cls, spec: NetworkSpec, values) -> WeightVector:
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.shape[0] != spec.param_count:
            raise DimensionMismatchError(
                f"Weight vector has {arr.shape[0]} entries, spec needs {spec.param_count}",
                expected=spec.param_count, got=arr.shape[0],
            )
        return WeightVector(values=arr, spec_hash=spec.spec_hash)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def check(self, spec: NetworkSpec) -> WeightVector:
        if self.n != spec.param_count:
            raise DimensionMismatchError(
                f"Weight vector has {self.n} entries, spec needs {spec.param_count}",
                expected=spec.param_count, got=self.n,
            )
        if self.spec_hash != spec.spec_hash:
            raise DimensionMismatchError("Weight vector is bound to a different NetworkSpec",
                                         expected=spec.spec_hash, got=self.spec_hash)
        return self


class Batch(BaseModel):
    """N inputs (rows) with optional local class labels for the head of task_id."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray
    labels: Optional[np.ndarray] = None
    task_id: int = 0

    @field_validator("inputs", mode="before")
    @classmethod
    def as_matrix(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ValueError(f"inputs must be an N x k matrix, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise EmptyBatchError("Batch has no rows")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("Batch inputs contain non-finite values")
        arr.flags.writeable = False
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def as_label_vector(cls, v) -> Optional[np.ndarray]:
        if v is None:
            return None
        arr = np.array(v, dtype=np.int64).reshape(-1)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def check_label_count(self) -> Batch:
        if self.labels is not None and self.labels.shape[0] != self.inputs.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        return self

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise MissingLabelsError(f"Batch for task {self.task_id} has no labels", task_id=self.task_id)
        return self.labels

    def check_for(self, spec: NetworkSpec) -> Batch:
        if self.input_dim != spec.input_dim:
            raise DimensionMismatchError(
                f"Batch rows have length {self.input_dim}, layer 0 expects {spec.input_dim}",
                layer=0, expected=spec.input_dim, got=self.input_dim,
            )
        if self.labels is not None:
            width = spec.head(self.task_id).width
            if self.labels.min() < 0 or self.labels.max() >= width:
                raise LabelRangeError(
                    f"Labels for task {self.task_id} must lie in [0, {width})",
                    task_id=self.task_id, low=int(self.labels.min()), high=int(self.labels.max()),
                )
        return self

    def take(self, indices: np.ndarray) -> Batch:
        labels = None if self.labels is None else self.labels[indices]
        return Batch(inputs=self.inputs[indices], labels=labels, task_id=self.task_id)

    def subsample(self, size: int, seed: int) -> Batch:
        """Seeded subsample without replacement; the batch itself when it is already small enough."""
        if size >= self.size:
            return self
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(self.size, size=size, replace=False))
        return self.take(indices)

    def with_inputs(self, inputs: np.ndarray) -> Batch:
        return Batch(inputs=inputs, labels=self.labels, task_id=self.task_id)
