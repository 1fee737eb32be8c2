"""
Shared inner solve for one path step.

The direction lives on the epsilon-sphere ||theta||^2 = epsilon. Solvers work in unit coordinates u = theta / sqrt(eps):
candidates are drawn uniformly on the unit sphere, each one is refined by projected gradient descent with
backtracking (project back onto the sphere after every step), and the candidate with the lowest final objective wins.
Inside a path the previous step direction joins the candidates, so the descent continues from where the last
step ended instead of restarting from scratch.
"""
import abc
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from metric.metric_tensor import MetricEvaluation
from shared_models.errors import InvalidPathConfigError, NonFiniteError
from shared_models.path import DirectionDiagnostics, PathConfig

MAX_BACKTRACKS = 30
STEP_GROWTH = 1.5
ARMIJO_C = 1e-4


class DirectionSolver(abc.ABC):
    config: PathConfig
    metric: MetricEvaluation

    # Unit gradient of L, None when the objective does not couple (absent, zero, or beta == 0)
    _grad_unit: Optional[np.ndarray]
    # Unit direction of the previous path step, offered as a warm start
    _previous: Optional[np.ndarray]
    # 1.0 on coordinates the direction may use, 0.0 on frozen ones; None when nothing is frozen
    _free: Optional[np.ndarray]
    _grad_norm: float
    _q_ref: float

    def __init__(
        self, metric: MetricEvaluation, config: PathConfig, grad_l: Optional[np.ndarray] = None,
        previous: Optional[np.ndarray] = None, frozen: Optional[np.ndarray] = None,
    ):
        config.require_resolved()
        self.config = config
        self.metric = metric
        self._free = None
        if frozen is not None:
            frozen = np.asarray(frozen, dtype=bool).reshape(-1)
            if frozen.shape[0] != metric.spec.param_count:
                raise InvalidPathConfigError(
                    f"Frozen mask has {frozen.shape[0]} entries, network has {metric.spec.param_count}"
                )
            if frozen.all():
                raise InvalidPathConfigError("Every coordinate is frozen; there is no direction to step in")
            if frozen.any():
                self._free = (~frozen).astype(np.float64)
        self._grad_unit = None
        self._grad_norm = 0.0
        if grad_l is not None:
            grad_l = np.asarray(grad_l, dtype=np.float64).reshape(-1)
            if grad_l.shape[0] != metric.spec.param_count:
                raise InvalidPathConfigError(
                    f"Objective gradient has {grad_l.shape[0]} entries, network has {metric.spec.param_count}"
                )
            if not np.all(np.isfinite(grad_l)):
                raise NonFiniteError("Objective gradient has non-finite entries")
            grad_l = self.restrict(grad_l)
            self._grad_norm = float(np.linalg.norm(grad_l))
            if self._grad_norm == 0.0:
                logger.warning("Objective gradient is exactly zero; stepping as if L = 0")
            elif config.beta > 0.0:
                self._grad_unit = grad_l / self._grad_norm
        self._previous = None
        if previous is not None:
            previous = np.asarray(previous, dtype=np.float64).reshape(-1)
            if previous.shape[0] != metric.spec.param_count:
                raise InvalidPathConfigError(
                    f"Previous direction has {previous.shape[0]} entries, network has {metric.spec.param_count}"
                )
            previous = self.restrict(previous)
            norm = float(np.linalg.norm(previous))
            if np.isfinite(norm) and norm > 0.0:
                self._previous = previous / norm
        self._q_ref = 1.0

    def restrict(self, v: np.ndarray) -> np.ndarray:
        """Zeroes the frozen coordinates of v"""
        return v if self._free is None else v * self._free

    @property
    def coupled(self) -> bool:
        return self._grad_unit is not None

    @property
    def radius(self) -> float:
        return self.config.step_length

    @property
    def q_ref(self) -> float:
        return self._q_ref

    # ━━━━━━━━━━━━━━━━━━    Objective    ━━━━━━━━━━━━━━━━━━ #
    @abc.abstractmethod
    def value(self, u: np.ndarray) -> float:
        """Normalised objective at unit direction u"""
        pass

    @abc.abstractmethod
    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Euclidean gradient of `value` at u"""
        pass

    def q_unit(self, u: np.ndarray) -> float:
        return self.metric.output_distance_sq(u)

    def objective_at(self, theta: np.ndarray) -> float:
        """Normalised objective of an arbitrary epsilon-sphere direction (used by brute force comparisons)"""
        return self.value(np.asarray(theta, dtype=np.float64) / self.radius)

    def _linear_term(self, u: np.ndarray) -> float:
        return self.config.beta * float(u @ self._grad_unit) if self.coupled else 0.0

    def _linear_gradient(self) -> np.ndarray:
        if self.coupled:
            return self.config.beta * self._grad_unit
        return np.zeros(self.metric.spec.param_count)

    # ━━━━━━━━━━━━━━━━━━    Candidates    ━━━━━━━━━━━━━━━━━━ #
    def candidates(self, step_index: int) -> List[np.ndarray]:
        """
        n_candidates uniform sphere samples (seeded by (seed, step)), then the warm start -grad L when coupled,
        then the previous step direction when one is given
        """
        rng = np.random.default_rng([self.config.seed, step_index])
        raw = self.restrict(rng.standard_normal((self.config.n_candidates, self.metric.spec.param_count)))
        found = [row / np.linalg.norm(row) for row in raw]
        if self.coupled:
            found.append(-self._grad_unit)
        if self._previous is not None:
            found.append(self._previous)
        return found

    def set_reference(self, candidates: List[np.ndarray]):
        """q normaliser: q at the warm start when coupled, otherwise at the first candidate"""
        q_ref = self.q_unit(-self._grad_unit if self.coupled else candidates[0])
        self._q_ref = q_ref if q_ref > 0.0 else 1.0

    # ━━━━━━━━━━━━━━━━━━    Descent    ━━━━━━━━━━━━━━━━━━ #
    def descend(self, u: np.ndarray) -> Tuple[np.ndarray, float, float, int]:
        """Projected descent with backtracking. Only strictly improving iterates are kept."""
        value = self.value(u)
        initial = value
        grad = self.restrict(self.gradient(u))
        alpha = self.config.inner_lr / self.radius
        accepted = 0
        for _ in range(self.config.inner_iters):
            tangent = grad - (grad @ u) * u
            tangent_sq = float(tangent @ tangent)
            if tangent_sq == 0.0:
                break
            improved = False
            for _ in range(MAX_BACKTRACKS):
                trial = u - alpha * tangent
                trial = trial / np.linalg.norm(trial)
                trial_value = self.value(trial)
                if trial_value <= value - ARMIJO_C * alpha * tangent_sq and trial_value < value:
                    improved = True
                    break
                alpha *= 0.5
            if not improved:
                break
            u, value = trial, trial_value
            grad = self.restrict(self.gradient(u))
            alpha *= STEP_GROWTH
            accepted += 1
        return u, initial, value, accepted

    def solve(self, step_index: int = 0) -> Tuple[np.ndarray, DirectionDiagnostics]:
        candidates = self.candidates(step_index)
        self.set_reference(candidates)
        best: Optional[Tuple[np.ndarray, float, float, int, int]] = None
        for idx, start in enumerate(candidates):
            u, initial, final, accepted = self.descend(start)
            logger.debug(f"candidate {idx}: objective {initial:.6e} -> {final:.6e} ({accepted} accepted steps)")
            # Strict comparison keeps the lowest index on ties
            if best is None or final < best[2]:
                best = (u, initial, final, accepted, idx)
        u, initial, final, accepted, idx = best
        theta = self.radius * u
        diagnostics = DirectionDiagnostics(
            candidate_index=idx,
            n_candidates=len(candidates),
            initial_objective=initial,
            final_objective=final,
            accepted_iters=accepted,
        )
        return theta, diagnostics
