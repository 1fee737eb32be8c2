from typing import Optional

import numpy as np

from metric.metric_tensor import MetricEvaluation
from path_sampler.solvers.base_solver import DirectionSolver
from shared_models.path import PathConfig


class GeodesicDirectionSolver(DirectionSolver):
    """
    Constant output velocity: F(u) = ((q(u) - v0 / eps) / s)^2 (+ beta term when L couples),
    with s = max(v0 / eps, q_ref). For v0 = 0 this is a monotone transform of the plain FIP objective.
    """
    _target: float

    def __init__(
        self, metric: MetricEvaluation, config: PathConfig, grad_l: Optional[np.ndarray] = None,
        previous: Optional[np.ndarray] = None, frozen: Optional[np.ndarray] = None,
    ):
        super().__init__(metric, config, grad_l, previous, frozen)
        self._target = config.v0 / config.epsilon

    @property
    def _scale(self) -> float:
        return max(self._target, self._q_ref)

    def value(self, u: np.ndarray) -> float:
        gap = (self.q_unit(u) - self._target) / self._scale
        return gap * gap + self._linear_term(u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        gap = self.q_unit(u) - self._target
        return 4.0 * gap / (self._scale ** 2) * self.metric.apply_metric(u) + self._linear_gradient()
