from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
from loguru import logger

from metric.metric_tensor import MetricEvaluation, anchor_subsample
from objectives import objective_grad
from path_sampler.solvers import SOLVER_MAP
from shared_models.errors import InvalidPathConfigError, NonFiniteError, PathAbortedError
from shared_models.network import Batch, NetworkSpec, WeightVector
from shared_models.objective import ObjectiveSpec, RefPoint
from shared_models.path import DirectionDiagnostics, FIPath, PathConfig, PathMode, PathProvenance, PathStep

StepCallback = Callable[[PathStep], None]


def fip_direction(
    me: MetricEvaluation, grad_l: Optional[np.ndarray], cfg: PathConfig, step_index: int = 0,
    previous: Optional[np.ndarray] = None, frozen: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, DirectionDiagnostics]:
    """
    Direction of minimal output velocity on the epsilon-sphere, biased toward -grad_l by beta.
    Coordinates marked in `frozen` stay exactly zero in the returned direction.
    """
    return SOLVER_MAP[PathMode.FIP](me, cfg, grad_l, previous, frozen).solve(step_index)


def geodesic_direction(
    me: MetricEvaluation, v0: float, cfg: PathConfig, grad_l: Optional[np.ndarray] = None, step_index: int = 0,
    previous: Optional[np.ndarray] = None, frozen: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, DirectionDiagnostics]:
    if v0 < 0:
        raise InvalidPathConfigError(f"Target output velocity must be >= 0, got {v0}")
    cfg = cfg.model_copy(update={"v0": v0, "mode": PathMode.GEODESIC})
    return SOLVER_MAP[PathMode.GEODESIC](me, cfg, grad_l, previous, frozen).solve(step_index)


def _metric_for_step(
    spec: NetworkSpec, w: WeightVector, batch_metric: Batch, cfg: PathConfig, t: int,
    anchor_task_ids: Optional[Iterable[int]],
) -> MetricEvaluation:
    anchor = anchor_subsample(batch_metric, cfg.anchor_batch_size, seed=cfg.seed + t)
    rows = None if anchor_task_ids is None else spec.rows_for_tasks(anchor_task_ids)
    return MetricEvaluation(spec=spec, w=w, batch=anchor, output_mode=cfg.output_mode, output_rows=rows)


def _make_step(
    me: MetricEvaluation, w: WeightVector, theta: np.ndarray, diagnostics: DirectionDiagnostics, t: int,
    loss: float, grad_l: Optional[np.ndarray],
) -> PathStep:
    moved = w.values + theta
    if not np.all(np.isfinite(moved)):
        raise NonFiniteError(f"Step {t} produced non-finite weights", t=t)
    return PathStep(
        t=t,
        w=WeightVector(values=moved, spec_hash=w.spec_hash),
        theta_star=theta,
        g_norm_sq=me.output_distance_sq(theta),
        obj_alignment=0.0 if grad_l is None else float(theta @ grad_l),
        secondary_loss=loss,
        diagnostics=diagnostics,
    )


def _objective_gradient(
    spec: NetworkSpec, w: WeightVector, objective: ObjectiveSpec, cfg: PathConfig, t: int,
    w_ref: Optional[WeightVector],
) -> Tuple[float, Optional[np.ndarray]]:
    loss, grad_l = objective_grad(objective.scheduled(t, cfg.n_steps), spec, w, w_ref)
    if grad_l is not None and not np.all(np.isfinite(grad_l)):
        raise NonFiniteError(f"Objective gradient is non-finite at step {t}", t=t)
    return loss, grad_l


def fip_step(
    spec: NetworkSpec,
    w: WeightVector,
    batch_metric: Batch,
    objective: ObjectiveSpec,
    cfg: PathConfig,
    t: int = 0,
    anchor_task_ids: Optional[Iterable[int]] = None,
    w_ref: Optional[WeightVector] = None,
    previous: Optional[np.ndarray] = None,
    frozen: Optional[np.ndarray] = None,
) -> PathStep:
    """
    One step w -> w + theta*. The metric is built on a seeded anchor subsample of batch_metric (restricted to
    the heads of anchor_task_ids when given), the objective gradient on the objective's own data.
    """
    w.check(spec)
    cfg = cfg if cfg.is_resolved else cfg.resolve(w)
    me = _metric_for_step(spec, w, batch_metric, cfg, t, anchor_task_ids)
    loss, grad_l = _objective_gradient(spec, w, objective, cfg, t, w_ref)
    theta, diagnostics = fip_direction(me, grad_l, cfg, step_index=t, previous=previous, frozen=frozen)
    return _make_step(me, w, theta, diagnostics, t, loss, grad_l)


def geodesic_step(
    me: MetricEvaluation, w: WeightVector, v0: float, cfg: PathConfig, step_index: int = 0,
    grad_l: Optional[np.ndarray] = None, loss: float = 0.0, previous: Optional[np.ndarray] = None,
    frozen: Optional[np.ndarray] = None,
) -> PathStep:
    """One step whose output velocity q(theta) is held as close to v0 as the sphere allows"""
    cfg = cfg if cfg.is_resolved else cfg.resolve(w)
    theta, diagnostics = geodesic_direction(
        me, v0, cfg, grad_l, step_index=step_index, previous=previous, frozen=frozen,
    )
    return _make_step(me, w, theta, diagnostics, step_index, loss, grad_l)


def _log_step(step: PathStep, n_steps: int):
    d = step.diagnostics
    logger.info(
        f"step {step.t + 1}/{n_steps}: q={step.g_norm_sq:.4e} <theta,gradL>={step.obj_alignment:.4e} "
        f"L={step.secondary_loss:.4e} candidate={d.candidate_index}/{d.n_candidates} "
        f"F {d.initial_objective:.4e} -> {d.final_objective:.4e}"
    )


def sample_path(
    spec: NetworkSpec,
    w0: WeightVector,
    batch_metric: Batch,
    objective: Optional[ObjectiveSpec],
    cfg: PathConfig,
    anchor_task_ids: Optional[Iterable[int]] = None,
    provenance: Optional[PathProvenance] = None,
    on_step: Optional[StepCallback] = None,
    frozen: Optional[np.ndarray] = None,
) -> FIPath:
    """
    Chains n_steps steps from w0. epsilon and inner_lr are resolved once from w0.
    Coordinates marked in `frozen` keep their w0 value along the whole path.
    cfg.mode picks the solver: FIP (minimal output velocity) or GEODESIC (output velocity held at cfg.v0).
    Non-finite weights abort the path with PathAbortedError carrying the prefix built so far.
    """
    w0.check(spec)
    cfg = cfg.resolve(w0)
    objective = ObjectiveSpec.null() if objective is None else objective
    anchor_task_ids = None if anchor_task_ids is None else list(anchor_task_ids)
    w_ref = w0 if objective.ref_point is RefPoint.FIXED else None
    path = FIPath(spec=spec, start=w0, steps=[], config=cfg, provenance=provenance or PathProvenance())
    logger.info(
        f"━━━━━━ Sampling {cfg.mode.value} path: {cfg.n_steps} steps, sqrt(eps)={cfg.step_length:.4e}, "
        f"beta={cfg.beta}, objective={objective.kind.value} ━━━━━━"
    )

    steps: List[PathStep] = []
    w = w0
    for t in range(cfg.n_steps):
        previous = steps[-1].theta_star if steps else None
        try:
            if cfg.mode is PathMode.FIP:
                step = fip_step(spec, w, batch_metric, objective, cfg, t, anchor_task_ids, w_ref, previous, frozen)
            else:
                me = _metric_for_step(spec, w, batch_metric, cfg, t, anchor_task_ids)
                loss, grad_l = _objective_gradient(spec, w, objective, cfg, t, w_ref)
                step = geodesic_step(
                    me, w, cfg.v0, cfg, step_index=t, grad_l=grad_l, loss=loss, previous=previous, frozen=frozen,
                )
        except NonFiniteError as e:
            partial = path.model_copy(update={"steps": steps})
            logger.error(f"Path aborted at step {t}: {e}")
            raise PathAbortedError(f"Path aborted at step {t}: {e}", partial_path=partial, t=t) from e
        steps.append(step)
        w = step.w
        if on_step is not None:
            on_step(step)
        if path.is_recorded(t):
            _log_step(step, cfg.n_steps)

    path = path.model_copy(update={"steps": steps})
    logger.info(
        f"Path finished: length {path.euclidean_length():.4e}, displacement {path.displacement():.4e}"
    )
    return path


def sample_geodesic_path(
    spec: NetworkSpec,
    w0: WeightVector,
    batch_metric: Batch,
    v0: float,
    cfg: PathConfig,
    anchor_task_ids: Optional[Iterable[int]] = None,
    provenance: Optional[PathProvenance] = None,
    on_step: Optional[StepCallback] = None,
    frozen: Optional[np.ndarray] = None,
) -> FIPath:
    if v0 < 0:
        raise InvalidPathConfigError(f"Target output velocity must be >= 0, got {v0}")
    cfg = cfg.model_copy(update={"mode": PathMode.GEODESIC, "v0": v0})
    return sample_path(spec, w0, batch_metric, None, cfg, anchor_task_ids, provenance, on_step, frozen)
