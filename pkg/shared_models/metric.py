from enum import Enum
from typing import List

from pydantic import BaseModel


class OutputMode(str, Enum):
    PRE_SOFTMAX = "pre-softmax"
    POST_SOFTMAX = "post-softmax"


class SpectrumReport(BaseModel):
    """Descending eigenvalues of the dense metric and the size of its near-null subspace"""
    eigenvalues: List[float]
    degeneracy_dim: int
    tol_rel: float
    n: int
    N: int

    @property
    def rank(self) -> int:
        return self.n - self.degeneracy_dim

    @property
    def lambda_max(self) -> float:
        return self.eigenvalues[0] if self.eigenvalues else 0.0
