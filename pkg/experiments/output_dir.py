import os
from pathlib import Path
from typing import Optional

from loguru import logger

from shared_models.errors import OutputLockedError
from shared_models.experiment_config import ExperimentConfig

LOCK_NAME = ".lock"
RESOLVED_CONFIG_NAME = "config.resolved.json"
RUN_LOG_NAME = "runlog.jsonl"


class OutputDir:
    """
    Exclusive ownership of an experiment output directory for the duration of a run:
    `.lock` is created with O_EXCL, a rotating loguru file sink writes to logs/, and the resolved config is echoed.
    """
    root: Path
    _sink_id: Optional[int]

    def __init__(self, root: Path, cfg: ExperimentConfig):
        self.root = root
        self.cfg = cfg
        self._sink_id = None
        self._locked = False

    @property
    def lock_path(self) -> Path:
        return self.root.joinpath(LOCK_NAME)

    @property
    def logs(self) -> Path:
        return self.root.joinpath("logs")

    @property
    def checkpoints(self) -> Path:
        return self.root.joinpath("checkpoints")

    @property
    def paths(self) -> Path:
        return self.root.joinpath("paths")

    @property
    def plotdata(self) -> Path:
        return self.root.joinpath("plotdata")

    @property
    def datasets(self) -> Path:
        return self.root.joinpath("datasets")

    @property
    def run_log_path(self) -> Path:
        return self.root.joinpath(RUN_LOG_NAME)

    def __enter__(self) -> "OutputDir":
        self.root.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLockedError(f"{self.root} is owned by another run (remove {LOCK_NAME} if it is stale)",
                                    out_dir=str(self.root))
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        self._locked = True
        for sub in (self.logs, self.checkpoints, self.paths, self.plotdata, self.datasets):
            sub.mkdir(exist_ok=True)
        self._sink_id = logger.add(self.logs.joinpath("{time}.log"), rotation="5h")
        self.root.joinpath(RESOLVED_CONFIG_NAME).write_text(self.cfg.model_dump_json(indent=2))
        logger.info(f"━━━━━━ Run {self.cfg.resolved_run_id} writing to {self.root} ━━━━━━")
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._sink_id is not None:
            logger.remove(self._sink_id)
            self._sink_id = None
        if self._locked:
            self.lock_path.unlink(missing_ok=True)
            self._locked = False
        return False
