from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from shared_models.errors import InvalidPathConfigError
from shared_models.metric import OutputMode
from shared_models.network import NetworkSpec, WeightVector

CODE_VERSION = "0.3.0"


class PathMode(str, Enum):
    """
    FIP - minimise output velocity (plus the beta-weighted objective term)
    GEODESIC - hold output velocity at the target v0
    """
    FIP = "fip"
    GEODESIC = "geodesic"


class PathConfig(BaseModel):
    """
    epsilon is the squared Euclidean length of every step. When unset it is resolved from the start point as
    sqrt(epsilon) = relative_step * ||w0||; inner_lr then defaults to 0.1 * sqrt(epsilon).
    """
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    relative_step: float = Field(default=1e-2, gt=0.0)
    beta: float = Field(default=1.0, ge=0.0)
    n_steps: int = Field(default=50, ge=1)
    inner_iters: int = Field(default=20, ge=1)
    inner_lr: Optional[float] = Field(default=None, gt=0.0)
    n_candidates: int = Field(default=8, ge=1)
    seed: int = 0
    anchor_batch_size: int = Field(default=256, ge=1)
    output_mode: OutputMode = OutputMode.PRE_SOFTMAX
    mode: PathMode = PathMode.FIP
    v0: float = Field(default=0.0, ge=0.0)
    record_stride: int = Field(default=10, ge=1)

    @property
    def is_resolved(self) -> bool:
        return self.epsilon is not None and self.inner_lr is not None

    @property
    def step_length(self) -> float:
        self.require_resolved()
        return float(np.sqrt(self.epsilon))

    def require_resolved(self):
        if self.epsilon is None or self.epsilon <= 0:
            raise InvalidPathConfigError(f"epsilon must be resolved and > 0, got {self.epsilon}")

    def resolve(self, w0: WeightVector) -> PathConfig:
        epsilon = self.epsilon
        if epsilon is None:
            norm = float(np.linalg.norm(w0.values))
            if norm == 0.0:
                raise InvalidPathConfigError("Cannot derive epsilon from a zero start point; set epsilon explicitly")
            epsilon = (self.relative_step * norm) ** 2
        inner_lr = self.inner_lr if self.inner_lr is not None else 0.1 * float(np.sqrt(epsilon))
        return self.model_copy(update={"epsilon": epsilon, "inner_lr": inner_lr})


class DirectionDiagnostics(BaseModel):
    candidate_index: int
    n_candidates: int
    initial_objective: float
    final_objective: float
    accepted_iters: int


class PathStep(BaseModel):
    """
    One accepted step: w is the weight vector AFTER applying theta_star.
    g_norm_sq is the squared output velocity <theta*, theta*>_g.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: int
    w: Optional[WeightVector] = None
    theta_star: Optional[np.ndarray] = None
    g_norm_sq: float
    obj_alignment: float
    secondary_loss: float
    diagnostics: DirectionDiagnostics


class PathProvenance(BaseModel):
    seeds: Dict[str, int] = dict()
    dataset_ids: List[str] = []
    code_version: str = CODE_VERSION
    notes: Dict[str, Any] = dict()


class FIPath(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: NetworkSpec
    start: WeightVector
    steps: List[PathStep] = []
    config: PathConfig
    provenance: PathProvenance = PathProvenance()

    @property
    def endpoint(self) -> WeightVector:
        for step in reversed(self.steps):
            if step.w is not None:
                return step.w
        return self.start

    def is_recorded(self, t: int) -> bool:
        """Steps whose full weights persist: every record_stride-th step plus the final one"""
        return (t + 1) % self.config.record_stride == 0 or t == self.config.n_steps - 1

    def recorded_steps(self) -> List[PathStep]:
        return [step for step in self.steps if step.w is not None and self.is_recorded(step.t)]

    def euclidean_length(self) -> float:
        return float(sum(np.linalg.norm(step.theta_star) for step in self.steps if step.theta_star is not None))

    def displacement(self) -> float:
        return float(np.linalg.norm(self.endpoint.values - self.start.values))
