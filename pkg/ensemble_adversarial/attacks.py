from typing import Tuple

import numpy as np
from loguru import logger

from core_net.network import input_gradient
from shared_models.ensemble import AttackConfig
from shared_models.errors import AttackInfeasibleError
from shared_models.network import Batch, NetworkSpec, WeightVector

Model = Tuple[NetworkSpec, WeightVector]


def _inside(bound: np.ndarray, x0: np.ndarray, eps: float) -> np.ndarray:
    return np.abs(bound - x0) <= eps


def feasible_box(x0: np.ndarray, eps: float, clamp_range: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-coordinate [lo, hi] = B_inf(x0, eps) intersected with clamp_range, with both bounds satisfying
    |bound - x0| <= eps as evaluated in float64.
    """
    lo = x0 - eps
    hi = x0 + eps
    # x0 +- eps can round one ulp outside the ball; walk it back toward x0
    for bound in (lo, hi):
        bad = ~_inside(bound, x0, eps)
        while np.any(bad):
            bound[bad] = np.nextafter(bound[bad], x0[bad])
            bad = ~_inside(bound, x0, eps)
    lo = np.maximum(lo, clamp_range[0])
    hi = np.minimum(hi, clamp_range[1])
    if np.any(lo > hi):
        raise AttackInfeasibleError(
            "Some inputs lie further than eps_adv outside the clamp range", eps=eps, clamp_range=list(clamp_range)
        )
    return lo, hi


def pgd_attack(surrogate: Model, batch: Batch, cfg: AttackConfig) -> np.ndarray:
    """
    x <- clip_box(x + step * sign(grad_x CE(f(x), y))) for n_iters iterations, gradients from the surrogate.
    Returns the perturbed N x k inputs.
    """
    spec, w = surrogate
    batch.require_labels()
    batch.check_for(spec)
    x0 = np.array(batch.inputs, dtype=np.float64)
    cfg = cfg.resolved_for(x0)
    lo, hi = feasible_box(x0, cfg.eps_adv, cfg.clamp_range)
    if cfg.eps_adv == 0.0:
        return np.clip(x0, lo, hi)

    x = x0.copy()
    if cfg.n_iters > 1 and cfg.random_start:
        rng = np.random.default_rng(cfg.seed)
        x = rng.uniform(lo, hi)
    for _ in range(cfg.n_iters):
        grad = input_gradient(spec, w, batch.with_inputs(x))
        x = np.clip(x + cfg.step * np.sign(grad), lo, hi)
    logger.debug(
        f"PGD on {batch.size} inputs: eps={cfg.eps_adv} step={cfg.step} iters={cfg.n_iters} "
        f"mean |dx|_inf={np.mean(np.max(np.abs(x - x0), axis=1)):.4e}"
    )
    return x


def fgsm_attack(surrogate: Model, batch: Batch, eps: float, clamp_range: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Single sign-gradient step of size eps"""
    cfg = AttackConfig(eps_adv=eps, step_size=eps, n_iters=1, random_start=False, clamp_range=clamp_range)
    return pgd_attack(surrogate, batch, cfg)
