"""
Task data for the experiments: synthetic blobs and IDX image files (MNIST layout).

IDX: 2 zero bytes | dtype code | rank | rank x u32 BE dims | big-endian payload.
Images are u8 (0x0803, scaled to [0, 1]); adversarial batches written here use f64 (0x0E) and keep their values.
"""
import json
import math
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from shared_models.errors import (
    BadMagicError,
    CountMismatchError,
    DatasetError,
    InfeasiblePackingError,
    TruncatedFileError,
)
from shared_models.experiment_config import BlobLayout, BlobsDataset, ExperimentConfig, IdxDataset
from shared_models.network import Batch

IDX_DTYPES: Dict[int, np.dtype] = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
PACKING_ATTEMPTS = 1000


class TaskData(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    task_id: int
    n_classes: int
    train: Batch
    test: Batch
    name: str = ""
    # First global label of this task when it shares a head with earlier tasks
    label_offset: int = 0

    @property
    def head_id(self) -> int:
        """Task id of the output head this task is scored on"""
        return self.train.task_id

    @property
    def label_span(self) -> int:
        return self.label_offset + self.n_classes


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Blobs    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def _pack_centers(
    rng: np.random.Generator, n_classes: int, dim: int, separation: float, radius: float
) -> np.ndarray:
    centers: List[np.ndarray] = []
    for _ in range(n_classes):
        for _ in range(PACKING_ATTEMPTS):
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            candidate = direction * radius * rng.uniform() ** (1.0 / dim)
            if all(np.linalg.norm(candidate - c) >= separation for c in centers):
                centers.append(candidate)
                break
        else:
            raise InfeasiblePackingError(
                f"Could not place {n_classes} centers {separation} apart in a radius-{radius:.3g} ball in R^{dim}",
                n_classes=n_classes, dim=dim, separation=separation, radius=radius, placed=len(centers),
            )
    return np.stack(centers)


def gen_blobs(
    n_classes: int,
    n_per_class: int,
    dim: int,
    separation: float,
    seed: int,
    radius: Optional[float] = None,
    task_id: int = 0,
) -> Batch:
    """
    Unit-variance Gaussian clusters, exactly n_per_class rows per class, rows ordered by class.
    Centers are rejection sampled in a ball of radius `radius` (default separation * max(1, n_classes^(1/dim))).
    """
    if n_classes < 2:
        raise DatasetError(f"Blobs need at least 2 classes, got {n_classes}")
    if separation <= 0:
        raise DatasetError(f"Blob separation must be > 0, got {separation}")
    radius = separation * max(1.0, n_classes ** (1.0 / dim)) if radius is None else radius
    rng = np.random.default_rng(seed)
    centers = _pack_centers(rng, n_classes, dim, separation, radius)
    inputs = np.concatenate([center + rng.standard_normal((n_per_class, dim)) for center in centers])
    labels = np.repeat(np.arange(n_classes), n_per_class)
    return Batch(inputs=inputs, labels=labels, task_id=task_id)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    IDX    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def read_idx(path: Path) -> Tuple[int, np.ndarray]:
    """Returns (magic, array in native byte order)"""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path} is {len(raw)} bytes, too short for an IDX header", file=str(path))
    zero, dtype_code, rank = struct.unpack(">HBB", raw[:4])
    magic = (dtype_code << 8) | rank
    if zero != 0 or dtype_code not in IDX_DTYPES or rank < 1:
        raise BadMagicError(f"{path} has bad IDX magic 0x{struct.unpack('>I', raw[:4])[0]:08x}", file=str(path))
    header_len = 4 + 4 * rank
    if len(raw) < header_len:
        raise TruncatedFileError(f"{path} ends inside its dimension fields", file=str(path))
    dims = struct.unpack(f">{rank}I", raw[4:header_len])
    dtype = IDX_DTYPES[dtype_code]
    expected = math.prod(dims) * dtype.itemsize
    if len(raw) - header_len < expected:
        raise TruncatedFileError(
            f"{path} holds {len(raw) - header_len} payload bytes, dims {dims} need {expected}",
            file=str(path), dims=list(dims),
        )
    data = np.frombuffer(raw, dtype=dtype, count=math.prod(dims), offset=header_len).reshape(dims)
    return magic, data.astype(dtype.newbyteorder("="))


def write_idx(path: Path, array: np.ndarray, dtype_code: int):
    dtype = IDX_DTYPES[dtype_code]
    header = struct.pack(">HBB", 0, dtype_code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(array, dtype=dtype).tobytes())


def load_idx(images_path: Path, labels_path: Path, task_id: int = 0) -> Batch:
    """Row-major flattened images; u8 pixels scaled to [0, 1], f64 images taken as stored"""
    image_magic, images = read_idx(images_path)
    label_magic, labels = read_idx(labels_path)
    if image_magic not in (IMAGE_MAGIC, 0x0E03, 0x0E02):
        raise BadMagicError(f"{images_path}: expected image magic 0x{IMAGE_MAGIC:08x}, got 0x{image_magic:08x}")
    if label_magic != LABEL_MAGIC:
        raise BadMagicError(f"{labels_path}: expected label magic 0x{LABEL_MAGIC:08x}, got 0x{label_magic:08x}")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels",
            images=int(images.shape[0]), labels=int(labels.shape[0]),
        )
    if images.shape[0] == 0:
        raise DatasetError(f"{images_path} holds no images", file=str(images_path))
    inputs = images.reshape(images.shape[0], -1).astype(np.float64)
    if image_magic == IMAGE_MAGIC:
        inputs = inputs / 255.0
    return Batch(inputs=inputs, labels=labels.astype(np.int64), task_id=task_id)


def save_idx_batch(
    batch: Batch, images_path: Path, labels_path: Path, provenance: Optional[Dict[str, Any]] = None
) -> Path:
    """
    Writes f64 images (0x0E02) and u8 labels (0x0801) plus `<images>.provenance.json`.
    Used for adversarial batches, which are not representable as u8 pixels.
    """
    labels = batch.require_labels()
    write_idx(images_path, batch.inputs, 0x0E)
    write_idx(labels_path, labels.astype(np.uint8), 0x08)
    sidecar = Path(f"{images_path}.provenance.json")
    sidecar.write_text(json.dumps({"task_id": batch.task_id, **(provenance or {})}, indent=2, default=str))
    return sidecar


# ━━━━━━━━━━━━━━━━━━━━━━━━━━    Splits    ━━━━━━━━━━━━━━━━━━━━━━━━━━ #
def split_train_test(batch: Batch, test_fraction: float, seed: int) -> Tuple[Batch, Batch]:
    """Seeded permutation, stratified per class so both sides see every class"""
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = batch.require_labels()
    rng = np.random.default_rng(seed)
    train_idx: List[np.ndarray] = []
    test_idx: List[np.ndarray] = []
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        n_test = min(max(1, int(round(test_fraction * members.shape[0]))), members.shape[0] - 1)
        if n_test < 1:
            raise DatasetError(f"Class {cls} has a single example; it cannot be split", cls=int(cls))
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    return batch.take(np.sort(np.concatenate(train_idx))), batch.take(np.sort(np.concatenate(test_idx)))


def split_by_class(
    batch: Batch, class_groups: Sequence[Sequence[int]], first_task_id: int = 1, max_per_class: Optional[int] = None
) -> List[Batch]:
    """One batch per class group; labels are re-indexed to the position of the class inside its group"""
    labels = batch.require_labels()
    tasks: List[Batch] = []
    for offset, group in enumerate(class_groups):
        rows: List[np.ndarray] = []
        local: List[np.ndarray] = []
        for position, cls in enumerate(group):
            found = np.flatnonzero(labels == cls)
            if found.shape[0] == 0:
                raise DatasetError(f"Class {cls} does not occur in the data", cls=cls)
            if max_per_class is not None:
                found = found[:max_per_class]
            rows.append(found)
            local.append(np.full(found.shape[0], position))
        order = np.argsort(np.concatenate(rows), kind="stable")
        indices = np.concatenate(rows)[order]
        tasks.append(Batch(
            inputs=batch.inputs[indices], labels=np.concatenate(local)[order], task_id=first_task_id + offset,
        ))
    return tasks


def pad_inputs(batch: Batch, count: int) -> Batch:
    """Appends `count` input coordinates that are zero for every row"""
    return batch.with_inputs(np.hstack([batch.inputs, np.zeros((batch.size, count))]))


def build_tasks(cfg: ExperimentConfig) -> List[TaskData]:
    """Task stream for an experiment; task ids start at 1"""
    dataset = cfg.dataset
    tasks: List[TaskData] = []
    if isinstance(dataset, BlobsDataset) and dataset.layout is BlobLayout.SPLIT:
        tasks = _split_blob_tasks(dataset, cfg)
    elif isinstance(dataset, BlobsDataset):
        for offset in range(dataset.n_tasks):
            task_id = offset + 1
            data = gen_blobs(
                dataset.n_classes, dataset.n_per_class, dataset.dim, dataset.separation,
                seed=dataset.seed + offset, radius=dataset.radius, task_id=task_id,
            )
            train, test = split_train_test(data, cfg.test_fraction, seed=dataset.seed + offset)
            tasks.append(TaskData(task_id=task_id, n_classes=dataset.n_classes, train=train, test=test,
                                  name=f"blobs-{dataset.seed + offset}"))
    else:
        tasks = _idx_tasks(dataset, cfg)
    if isinstance(dataset, BlobsDataset) and dataset.padding_dims > 0:
        tasks = [
            task.model_copy(update={
                "train": pad_inputs(task.train, dataset.padding_dims),
                "test": pad_inputs(task.test, dataset.padding_dims),
            })
            for task in tasks
        ]
    for task in tasks:
        logger.info(f"Task {task.task_id} ({task.name}): {task.n_classes} classes, "
                    f"{task.train.size} train / {task.test.size} test rows")
    return tasks


def _split_blob_tasks(dataset: BlobsDataset, cfg: ExperimentConfig) -> List[TaskData]:
    n_total = dataset.n_classes * dataset.n_tasks
    full = gen_blobs(n_total, dataset.n_per_class, dataset.dim, dataset.separation, seed=dataset.seed,
                     radius=dataset.radius)
    groups = [list(range(k * dataset.n_classes, (k + 1) * dataset.n_classes)) for k in range(dataset.n_tasks)]
    tasks: List[TaskData] = []
    for data, group in zip(split_by_class(full, groups), groups):
        train, test = split_train_test(data, cfg.test_fraction, seed=dataset.seed + data.task_id)
        tasks.append(TaskData(task_id=data.task_id, n_classes=dataset.n_classes, train=train, test=test,
                              name=f"blobs-{dataset.seed}-classes-" + "-".join(str(c) for c in group)))
    return tasks


def as_class_incremental(tasks: Sequence[TaskData]) -> List[TaskData]:
    """
    Re-labels a task stream for a single shared head: every task is scored on the head of the first task,
    with its classes shifted behind those of the tasks before it.
    """
    if not tasks:
        return []
    head_id = tasks[0].task_id
    shared: List[TaskData] = []
    offset = 0
    for task in tasks:
        train, test = (
            batch.model_copy(update={"labels": batch.require_labels() + offset, "task_id": head_id})
            for batch in (task.train, task.test)
        )
        shared.append(task.model_copy(update={"train": train, "test": test, "label_offset": offset}))
        offset += task.n_classes
    logger.info(f"Class-incremental stream: {len(shared)} tasks, {offset} classes on the head of task {head_id}")
    return shared


def _idx_tasks(dataset: IdxDataset, cfg: ExperimentConfig) -> List[TaskData]:
    full = load_idx(dataset.images_path, dataset.labels_path)
    train_split = split_by_class(full, dataset.class_groups, max_per_class=dataset.max_per_class)
    if dataset.test_images_path is not None:
        test_full = load_idx(dataset.test_images_path, dataset.test_labels_path)
        pairs = list(zip(train_split, split_by_class(test_full, dataset.class_groups)))
    else:
        pairs = [split_train_test(task, cfg.test_fraction, seed=cfg.seed) for task in train_split]
    return [
        TaskData(task_id=train.task_id, n_classes=len(group), train=train, test=test,
                 name="classes-" + "-".join(str(c) for c in group))
        for (train, test), group in zip(pairs, dataset.class_groups)
    ]
