from __future__ import annotations

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from shared_models.errors import InvalidObjectiveError
from shared_models.network import Batch


class ObjectiveKind(str, Enum):
    NULL = "null"
    TASK_LOSS = "task-loss"
    SPARSIFY = "sparsify"


class RefPoint(str, Enum):
    """
    CURRENT - reproject the moving weights every step
    FIXED - project the weights the path started from, once
    """
    CURRENT = "current-w"
    FIXED = "fixed-w_t"


class SparsitySchedule(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"


_SPARSIFY_FIELDS = ("target_sparsity", "ref_point", "schedule", "include_biases")


class ObjectiveSpec(BaseModel):
    """
    Secondary loss L(x, w) biasing the path direction.
    Only the fields of `kind` may be populated; sparsify defaults are filled in on validation.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: ObjectiveKind = ObjectiveKind.NULL
    task_batch: Optional[Batch] = None
    target_sparsity: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    ref_point: Optional[RefPoint] = None
    schedule: Optional[SparsitySchedule] = None
    include_biases: Optional[bool] = None

    @model_validator(mode="before")
    @classmethod
    def fill_sparsify_defaults(cls, data):
        if isinstance(data, dict) and data.get("kind") in (ObjectiveKind.SPARSIFY, ObjectiveKind.SPARSIFY.value):
            data = dict(data)
            data.setdefault("ref_point", RefPoint.CURRENT)
            data.setdefault("schedule", SparsitySchedule.CONSTANT)
            data.setdefault("include_biases", True)
        return data

    @model_validator(mode="after")
    def check_kind_fields(self) -> ObjectiveSpec:
        self.validate_kind()
        return self

    def validate_kind(self):
        populated = {name for name in ("task_batch", *_SPARSIFY_FIELDS) if getattr(self, name) is not None}
        if self.kind is ObjectiveKind.NULL:
            expected = set()
        elif self.kind is ObjectiveKind.TASK_LOSS:
            expected = {"task_batch"}
        else:
            expected = set(_SPARSIFY_FIELDS)
        if populated != expected:
            raise InvalidObjectiveError(
                f"Objective of kind {self.kind.value} needs exactly {sorted(expected)}, got {sorted(populated)}",
                kind=self.kind.value, populated=sorted(populated),
            )
        if self.kind is ObjectiveKind.TASK_LOSS and self.task_batch.labels is None:
            raise InvalidObjectiveError("task-loss objective needs a labelled batch", kind=self.kind.value)

    @classmethod
    def null(cls) -> ObjectiveSpec:
        return ObjectiveSpec(kind=ObjectiveKind.NULL)

    @classmethod
    def task_loss(cls, batch: Batch) -> ObjectiveSpec:
        return ObjectiveSpec(kind=ObjectiveKind.TASK_LOSS, task_batch=batch)

    @classmethod
    def sparsify(
        cls,
        p: float,
        ref_point: RefPoint = RefPoint.CURRENT,
        schedule: SparsitySchedule = SparsitySchedule.CONSTANT,
        include_biases: bool = True,
    ) -> ObjectiveSpec:
        return ObjectiveSpec(
            kind=ObjectiveKind.SPARSIFY, target_sparsity=p, ref_point=ref_point, schedule=schedule,
            include_biases=include_biases,
        )

    def scheduled(self, t: int, n_steps: int) -> ObjectiveSpec:
        """Objective in force at step t: the linear schedule ramps p to its target at the last step"""
        if self.kind is not ObjectiveKind.SPARSIFY or self.schedule is SparsitySchedule.CONSTANT:
            return self
        return self.model_copy(update={"target_sparsity": self.target_sparsity * (t + 1) / n_steps})
