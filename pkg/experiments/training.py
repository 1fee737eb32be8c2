from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np
from loguru import logger

from core_net.network import LossKind, accuracy, init_weights, loss_and_grad
from ensemble_adversarial.ensemble import even_indices
from experiments.run_log import RunLog
from shared_models.errors import TrainingDivergedError
from shared_models.experiment_config import TrainingConfig
from shared_models.network import Batch, NetworkSpec, WeightVector

UpdateCallback = Callable[[int, WeightVector], None]


def minibatches(batch: Batch, batch_size: int, rng: np.random.Generator) -> Iterator[Batch]:
    order = rng.permutation(batch.size)
    for start in range(0, batch.size, batch_size):
        yield batch.take(np.sort(order[start:start + batch_size]))


class MomentumDescent:
    """Heavy-ball update v <- mu v - lr g, w <- w + v, with divergence detection"""

    def __init__(self, spec: NetworkSpec, w: WeightVector, cfg: TrainingConfig, loss: LossKind = LossKind.CROSS_ENTROPY):
        self.spec = spec
        self.cfg = cfg
        self.loss = loss
        self.values = np.array(w.values)
        self.velocity = np.zeros_like(self.values)
        self.updates = 0
        self.path_length = 0.0

    @property
    def weights(self) -> WeightVector:
        return WeightVector.for_spec(self.spec, self.values)

    def update(self, minibatch: Batch) -> float:
        current = self.weights
        value, grad = loss_and_grad(self.spec, current, minibatch, self.loss)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(
                f"Loss became non-finite after {self.updates} updates", last_finite_weights=current,
                updates=self.updates,
            )
        self.velocity = self.cfg.momentum * self.velocity - self.cfg.lr * grad
        moved = self.values + self.velocity
        if not np.all(np.isfinite(moved)):
            raise TrainingDivergedError(
                f"Weights became non-finite after {self.updates} updates", last_finite_weights=current,
                updates=self.updates,
            )
        self.path_length += float(np.linalg.norm(self.velocity))
        self.values = moved
        self.updates += 1
        return value


def train_base(
    spec: NetworkSpec,
    train: Batch,
    cfg: TrainingConfig,
    test: Optional[Batch] = None,
    w_init: Optional[WeightVector] = None,
    run_log: Optional[RunLog] = None,
    phase: str = "base",
) -> Tuple[WeightVector, RunLog]:
    """Seeded minibatch descent for cfg.epochs epochs; one train-epoch record per epoch"""
    run_log = RunLog(run_id=phase) if run_log is None else run_log
    w0 = init_weights(spec, cfg.seed) if w_init is None else w_init.check(spec)
    train.check_for(spec)
    rng = np.random.default_rng(cfg.seed)
    opt = MomentumDescent(spec, w0, cfg)
    logger.info(f"━━━━━━ Training {phase}: {cfg.epochs} epochs, lr={cfg.lr}, momentum={cfg.momentum} ━━━━━━")
    for epoch in range(cfg.epochs):
        losses = [opt.update(mb) for mb in minibatches(train, cfg.batch_size, rng)]
        w = opt.weights
        accuracies = {f"task-{train.task_id}/train": accuracy(spec, w, train)}
        if test is not None:
            accuracies[f"task-{test.task_id}/test"] = accuracy(spec, w, test)
        run_log.log(
            phase, "train-epoch", phase_step=epoch, accuracies=accuracies,
            losses={"train": float(np.mean(losses))},
            distance_from_w0=float(np.linalg.norm(w.values - w0.values)),
        )
    w = opt.weights
    logger.info(f"{phase} finished: {accuracies}, loss {np.mean(losses):.4e}")
    return w, run_log


def fine_tune(
    spec: NetworkSpec,
    w: WeightVector,
    batch: Batch,
    cfg: TrainingConfig,
    n_updates: int,
    on_update: Optional[UpdateCallback] = None,
) -> Tuple[WeightVector, float]:
    """
    Plain descent on `batch` for exactly n_updates minibatch updates (cycling epochs as needed).
    Returns the final weights and the Euclidean length of the route taken.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = MomentumDescent(spec, w.check(spec), cfg)
    while opt.updates < n_updates:
        for mb in minibatches(batch, cfg.batch_size, rng):
            opt.update(mb)
            if on_update is not None:
                on_update(opt.updates - 1, opt.weights)
            if opt.updates >= n_updates:
                break
    logger.info(f"Fine-tuned for {n_updates} updates, route length {opt.path_length:.4e}")
    return opt.weights, opt.path_length


def finetune_checkpoints(
    spec: NetworkSpec, w: WeightVector, batch: Batch, cfg: TrainingConfig, n_updates: int, count: int
) -> List[WeightVector]:
    """count snapshots spaced evenly along one fine-tuning run, the last one being its endpoint"""
    keep = set(even_indices(n_updates, count))
    snapshots: List[WeightVector] = []

    def collect(update: int, current: WeightVector):
        if update in keep:
            snapshots.append(current)

    fine_tune(spec, w, batch, cfg, n_updates, on_update=collect)
    return snapshots
