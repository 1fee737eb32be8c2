from __future__ import annotations

from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from shared_models.network import NetworkSpec, WeightVector


class EnsembleSource(str, Enum):
    FIP_PATH = "fip-path"
    INDEPENDENT_RUNS = "independent-runs"


class Ensemble(BaseModel):
    """Members share a single NetworkSpec; source_steps holds the path step of each member (fip-path only)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: NetworkSpec
    members: List[WeightVector]
    source: EnsembleSource
    source_steps: List[int] = []
    stride: Optional[int] = None

    @model_validator(mode="after")
    def check_members(self) -> Ensemble:
        if not self.members:
            raise ValueError("An ensemble needs at least one member")
        for member in self.members:
            member.check(self.spec)
        return self

    @property
    def size(self) -> int:
        return len(self.members)


class AttackConfig(BaseModel):
    """
    L-inf PGD settings. step_size defaults to eps_adv / 4.
    clamp_range None means the value range of the attacked inputs; with eps_relative, eps_adv and step_size are
    fractions of the clamp range width.
    With n_iters > 1 and random_start the attack starts from a uniform point in the feasible box.
    """
    eps_adv: float = Field(default=0.03, ge=0.0)
    step_size: Optional[float] = Field(default=None, ge=0.0)
    n_iters: int = Field(default=10, ge=1)
    seed: int = 0
    clamp_range: Optional[Tuple[float, float]] = (0.0, 1.0)
    eps_relative: bool = False
    random_start: bool = True

    @model_validator(mode="after")
    def check_clamp(self) -> AttackConfig:
        if self.clamp_range is not None and not self.clamp_range[0] < self.clamp_range[1]:
            raise ValueError(f"clamp_range needs lo < hi, got {self.clamp_range}")
        return self

    @property
    def step(self) -> float:
        return self.eps_adv / 4.0 if self.step_size is None else self.step_size

    def resolved_for(self, inputs: np.ndarray) -> AttackConfig:
        """Absolute budget and concrete clamp range for these inputs"""
        lo, hi = self.clamp_range if self.clamp_range is not None else (float(inputs.min()), float(inputs.max()))
        if not lo < hi:
            lo, hi = lo - 0.5, hi + 0.5
        scale = (hi - lo) if self.eps_relative else 1.0
        return self.model_copy(update={
            "eps_adv": self.eps_adv * scale, "step_size": self.step * scale, "clamp_range": (lo, hi),
            "eps_relative": False,
        })
