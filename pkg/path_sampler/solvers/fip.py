import numpy as np

from path_sampler.solvers.base_solver import DirectionSolver


class FipDirectionSolver(DirectionSolver):
    """
    F(u) = q(u) / q_ref + beta * <u, grad L / ||grad L||>

    q_ref is q at the warm start (or the first candidate when L does not couple), so both terms are scale free
    and the minimiser matches q(theta) + beta' <theta, grad L> on the sphere for a rescaled beta'.
    """

    def value(self, u: np.ndarray) -> float:
        return self.q_unit(u) / self._q_ref + self._linear_term(u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return 2.0 * self.metric.apply_metric(u) / self._q_ref + self._linear_gradient()
