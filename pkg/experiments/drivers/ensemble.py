from typing import Optional

from loguru import logger

from core_net.network import accuracy
from ensemble_adversarial import (
    coherence_score,
    diversity_score,
    ensemble_accuracy,
    ensemble_from_checkpoints,
    pgd_attack,
    sample_ensemble_along_path,
)
from experiments.datasets import build_tasks, save_idx_batch
from experiments.drivers.base import finish, open_run_log, persist_path, persist_weights, prepare_base
from experiments.operators import anchor_batch, provenance_for, step_recorder, trajectory
from experiments.output_dir import OutputDir
from experiments.run_log import RunLog
from experiments.training import finetune_checkpoints, train_base
from path_sampler import sample_path
from shared_models.experiment_config import ExperimentConfig


def run_ensemble(cfg: ExperimentConfig, out: Optional[OutputDir] = None) -> RunLog:
    """
    L = 0 path from the base network, members sampled along it, PGD examples transferred from an
    independently trained surrogate, or crafted on the base itself when no surrogate seed is set.
    Logs clean/adversarial accuracy of the base, each member and the softmax-sum ensemble, coherence against
    the surrogate, and representation diversity.
    """
    run_log = open_run_log(cfg, out)
    task = build_tasks(cfg)[0]
    spec, w, ckpt = prepare_base(cfg, task, run_log, out)
    settings = cfg.ensemble

    phase = "fip/ensemble"
    path = sample_path(
        spec, w, anchor_batch([task]), None, cfg.path, anchor_task_ids=[task.task_id],
        provenance=provenance_for(cfg.path, [task], operation="ensemble"),
        on_step=step_recorder(run_log, phase, spec, w, [task]),
    )
    persist_path(out, "ensemble", path)
    ens = sample_ensemble_along_path(path, settings.n_members)

    if settings.surrogate_seed is None:
        logger.info("Attack crafted on the base network and transferred to the ensemble")
        surrogate_w, surrogate_ckpt = w, ckpt
    else:
        surrogate_training = cfg.training.model_copy(update={"seed": settings.surrogate_seed})
        surrogate_w, _ = train_base(
            spec, task.train, surrogate_training, task.test, run_log=run_log, phase="surrogate",
        )
        surrogate_ckpt = persist_weights(out, ckpt, "surrogate", "train-surrogate", spec, surrogate_w,
                                         seed=settings.surrogate_seed)

    logger.info(f"━━━━━━ PGD transfer attack: {settings.attack} ━━━━━━")
    clean = task.test
    adversarial = clean.with_inputs(pgd_attack((spec, surrogate_w), clean, settings.attack))
    if out is not None:
        save_idx_batch(
            adversarial,
            out.datasets.joinpath("adversarial-images.idx"),
            out.datasets.joinpath("adversarial-labels.idx"),
            provenance={
                "surrogate_checksum": surrogate_ckpt.checksum,
                "attack": settings.attack.model_dump(),
                "source": task.name,
            },
        )

    def log_model(idx: int, name: str, clean_acc: float, adv_acc: float, coherence: Optional[float]):
        run_log.log("attack", "attack", phase_step=idx, accuracies={
            f"task-{task.task_id}/test": clean_acc, f"task-{task.task_id}/adversarial": adv_acc,
        }, values={"model": name, "clean_accuracy": clean_acc, "adversarial_accuracy": adv_acc,
                   "coherence": coherence, "eps_adv": settings.attack.eps_adv})

    log_model(0, "base", accuracy(spec, w, clean), accuracy(spec, w, adversarial),
              coherence_score((spec, w), (spec, surrogate_w), clean))
    for idx, (t, member) in enumerate(zip(ens.source_steps, ens.members), start=1):
        log_model(idx, f"member-{t}", accuracy(spec, member, clean), accuracy(spec, member, adversarial),
                  coherence_score((spec, member), (spec, surrogate_w), clean))
    log_model(ens.size + 1, "ensemble", ensemble_accuracy(ens, clean), ensemble_accuracy(ens, adversarial), None)

    finetuned = ensemble_from_checkpoints([
        (spec, snapshot) for snapshot in finetune_checkpoints(
            spec, w, task.train, cfg.training, n_updates=cfg.path.n_steps, count=settings.n_finetune_checkpoints,
        )
    ])
    for name, members in (("fip", ens), ("finetune", finetuned)):
        score = diversity_score(members, settings.diversity_layer, clean)
        run_log.log("diversity", "diversity", values={
            "ensemble": name, "members": members.size, "layer": settings.diversity_layer, "diversity": score,
        })
        logger.info(f"Diversity of the {name} ensemble at hidden layer {settings.diversity_layer}: {score:.4e}")
    return finish(cfg, run_log, out, {phase: trajectory(path)})
