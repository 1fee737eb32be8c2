from pathlib import Path

from loguru import logger

from shared_models.checkpoint import Checkpoint
from shared_models.errors import TruncatedCheckpointError


def save_checkpoint(ckpt: Checkpoint, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ckpt.to_bytes())
    logger.info(f"Checkpoint {ckpt.checksum} (n={ckpt.header.n}) -> {path}")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    raw = path.read_bytes()
    if not raw:
        raise TruncatedCheckpointError(f"{path} is empty", file=str(path))
    return Checkpoint.from_bytes(raw)
