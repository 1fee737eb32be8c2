"""
On-disk FIPath: `index.json` (config, provenance, spec, per-step scalars) plus one checkpoint per recorded step.
Only recorded steps (every record_stride-th and the last) keep their weights; theta_star is not persisted.
"""
from pathlib import Path
from typing import List, Optional

from loguru import logger
from pydantic import BaseModel

from shared_models.checkpoint import Checkpoint
from shared_models.errors import CheckpointError
from shared_models.network import NetworkSpec
from shared_models.path import DirectionDiagnostics, FIPath, PathConfig, PathProvenance, PathStep

INDEX_NAME = "index.json"
START_NAME = "start.fipc"


class StepRecord(BaseModel):
    t: int
    g_norm_sq: float
    obj_alignment: float
    secondary_loss: float
    diagnostics: DirectionDiagnostics
    checkpoint: Optional[str] = None


class PathIndex(BaseModel):
    spec: NetworkSpec
    config: PathConfig
    provenance: PathProvenance
    start: str = START_NAME
    steps: List[StepRecord] = []


def step_file_name(t: int) -> str:
    return f"step_{t:06d}.fipc"


def save_path(path: FIPath, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    start = Checkpoint.create(path.spec, path.start)
    out_dir.joinpath(START_NAME).write_bytes(start.to_bytes())

    records: List[StepRecord] = []
    for step in path.steps:
        file_name = None
        if step.w is not None and path.is_recorded(step.t):
            file_name = step_file_name(step.t)
            ckpt = start.derive("fip-path", path.spec, step.w, t=step.t, mode=path.config.mode.value)
            out_dir.joinpath(file_name).write_bytes(ckpt.to_bytes())
        records.append(StepRecord(
            t=step.t,
            g_norm_sq=step.g_norm_sq,
            obj_alignment=step.obj_alignment,
            secondary_loss=step.secondary_loss,
            diagnostics=step.diagnostics,
            checkpoint=file_name,
        ))
    index = PathIndex(spec=path.spec, config=path.config, provenance=path.provenance, steps=records)
    index_path = out_dir.joinpath(INDEX_NAME)
    index_path.write_text(index.model_dump_json(indent=2))
    logger.info(f"Saved path ({len(records)} steps, {sum(r.checkpoint is not None for r in records)} recorded) "
                f"to {out_dir}")
    return index_path


def load_path(in_dir: Path) -> FIPath:
    index = PathIndex.model_validate_json(in_dir.joinpath(INDEX_NAME).read_text())
    start = Checkpoint.from_bytes(in_dir.joinpath(index.start).read_bytes())
    if start.spec.spec_hash != index.spec.spec_hash:
        raise CheckpointError("Start checkpoint was written for a different network", file=index.start)

    steps: List[PathStep] = []
    for record in index.steps:
        w = None
        if record.checkpoint is not None:
            w = Checkpoint.from_bytes(in_dir.joinpath(record.checkpoint).read_bytes()).weights
        steps.append(PathStep(
            t=record.t,
            w=w,
            g_norm_sq=record.g_norm_sq,
            obj_alignment=record.obj_alignment,
            secondary_loss=record.secondary_loss,
            diagnostics=record.diagnostics,
        ))
    return FIPath(spec=index.spec, start=start.weights, steps=steps, config=index.config,
                  provenance=index.provenance)
