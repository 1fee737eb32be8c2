"""
Append-only run log, one JSON record per line.

Record schema (RunRecord):
    run_id          run identifier, identical on every line
    step            global record index, strictly increasing from 0
    phase           experiment phase, e.g. "base", "fip/task-2", "baseline/task-2", "sparsify/p=0.5"
    kind            "train-epoch" | "path-step" | "eval" | "sparsity" | "attack" | "diversity" | "compose" | "spectrum"
    phase_step      index inside the phase (epoch, path step, grid point ...)
    accuracies      {"task-<id>/<split>": accuracy}
    losses          {name: value}
    g_norm_sq       squared output velocity of a path step
    distance_from_w0  Euclidean distance of the current weights from the phase's start point
    wall_clock      seconds since the log was opened
    values          any further scalars (sparsity, eps_adv, member, coherence ...)
"""
from __future__ import annotations

import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger
from pydantic import BaseModel

from shared_models.errors import EmptyRunLogError, FipError


class RunRecord(BaseModel):
    run_id: str
    step: int
    phase: str
    kind: str
    phase_step: int = 0
    accuracies: Dict[str, float] = dict()
    losses: Dict[str, float] = dict()
    g_norm_sq: Optional[float] = None
    distance_from_w0: Optional[float] = None
    wall_clock: float = 0.0
    values: Dict[str, Any] = dict()


class RunLog:
    run_id: str
    path: Optional[Path]
    records: List[RunRecord]

    def __init__(self, run_id: str, path: Optional[Path] = None):
        self.run_id = run_id
        self.path = path
        self.records = []
        self._opened = time.perf_counter()
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.touch()

    def log(self, phase: str, kind: str, phase_step: int = 0, **fields: Any) -> RunRecord:
        record = RunRecord(
            run_id=self.run_id,
            step=len(self.records),
            phase=phase,
            kind=kind,
            phase_step=phase_step,
            wall_clock=time.perf_counter() - self._opened,
            **fields,
        )
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf8") as f:
                f.write(record.model_dump_json() + "\n")
        return record

    def filter(self, kind: Optional[str] = None, phase_prefix: Optional[str] = None) -> List[RunRecord]:
        return [
            r for r in self.records
            if (kind is None or r.kind == kind) and (phase_prefix is None or r.phase.startswith(phase_prefix))
        ]

    def last(self, kind: Optional[str] = None, phase_prefix: Optional[str] = None) -> RunRecord:
        found = self.filter(kind, phase_prefix)
        if not found:
            raise EmptyRunLogError(f"No {kind or 'any'} records under phase {phase_prefix or '*'}")
        return found[-1]

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def read(cls, path: Path) -> RunLog:
        run_log = cls.__new__(cls)
        run_log.path = None
        run_log.records = [
            RunRecord.model_validate_json(line) for line in path.read_text(encoding="utf8").splitlines() if line
        ]
        if not run_log.records:
            raise EmptyRunLogError(f"{path} holds no records", file=str(path))
        run_log.run_id = run_log.records[0].run_id
        for prev, nxt in zip(run_log.records, run_log.records[1:]):
            if nxt.step <= prev.step or nxt.run_id != run_log.run_id:
                raise FipError(f"{path} is not a single monotone run log (line for step {nxt.step})")
        run_log._opened = time.perf_counter()
        logger.info(f"Read {len(run_log.records)} records of run {run_log.run_id} from {path}")
        return run_log
