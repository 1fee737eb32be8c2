from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, Field, FilePath, model_validator

from shared_models.ensemble import AttackConfig
from shared_models.metric import OutputMode
from shared_models.network import Activation
from shared_models.objective import RefPoint, SparsitySchedule
from shared_models.path import PathConfig


class ExperimentKind(str, Enum):
    CONTINUAL = "continual"
    SPARSIFY = "sparsify"
    ENSEMBLE = "ensemble"
    COMPOSE = "compose"
    SPECTRUM = "spectrum"


# ━━━━━━━━━━━━━━━━━━    Data    ━━━━━━━━━━━━━━━━━━ #
class BlobLayout(str, Enum):
    """
    INDEPENDENT - task i is drawn with seed + i, so layouts of different tasks may overlap
    SPLIT - all n_tasks * n_classes centers are packed once, separation apart, and split into consecutive groups
    """
    INDEPENDENT = "independent"
    SPLIT = "split"


class ContinualScenario(str, Enum):
    """
    TASK_INCREMENTAL - every task owns its head and is scored over it alone
    CLASS_INCREMENTAL - one head widens with every task and all tasks are scored over every class seen so far
    """
    TASK_INCREMENTAL = "task-incremental"
    CLASS_INCREMENTAL = "class-incremental"


class BlobsDataset(BaseModel):
    """
    Synthetic Gaussian blobs, n_tasks tasks of n_classes classes each, laid out as `layout` says.
    """
    source: Literal["blobs"] = "blobs"
    n_classes: int = Field(default=2, ge=2)
    n_per_class: int = Field(default=100, ge=1)
    dim: int = Field(default=2, ge=1)
    separation: float = Field(default=10.0, gt=0.0)
    radius: Optional[float] = Field(default=None, gt=0.0)
    seed: int = 0
    n_tasks: int = Field(default=1, ge=1)
    layout: BlobLayout = BlobLayout.INDEPENDENT
    # Extra input coordinates that are zero in every example
    padding_dims: int = Field(default=0, ge=0)


class IdxDataset(BaseModel):
    """IDX image/label files; every entry of class_groups becomes one task over those classes"""
    source: Literal["idx"] = "idx"
    images_path: FilePath
    labels_path: FilePath
    test_images_path: Optional[FilePath] = None
    test_labels_path: Optional[FilePath] = None
    class_groups: List[List[int]] = [[0, 1]]
    max_per_class: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_groups(self) -> IdxDataset:
        if not self.class_groups or any(len(group) < 2 for group in self.class_groups):
            raise ValueError("Every class group needs at least two classes")
        if (self.test_images_path is None) != (self.test_labels_path is None):
            raise ValueError("test_images_path and test_labels_path must be given together")
        return self


DatasetConfig = Annotated[Union[BlobsDataset, IdxDataset], Field(discriminator="source")]


# ━━━━━━━━━━━━━━━━━━    Model / training    ━━━━━━━━━━━━━━━━━━ #
class NetworkConfig(BaseModel):
    hidden_dims: List[int] = [16]
    hidden_activation: Activation = Activation.RELU
    use_bias: bool = True


class TrainingConfig(BaseModel):
    """Minibatch gradient descent with heavy-ball momentum"""
    lr: float = Field(default=0.05, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=32, ge=1)
    seed: int = 0


# ━━━━━━━━━━━━━━━━━━    Per-experiment settings    ━━━━━━━━━━━━━━━━━━ #
class ContinualSettings(BaseModel):
    scenario: ContinualScenario = ContinualScenario.CLASS_INCREMENTAL
    head_init_scale: float = Field(default=0.1, ge=0.0)
    run_baseline: bool = True


class SparsifySettings(BaseModel):
    grid: List[float] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
    ref_point: RefPoint = RefPoint.CURRENT
    schedule: SparsitySchedule = SparsitySchedule.LINEAR
    include_biases: bool = True

    @model_validator(mode="after")
    def check_grid(self) -> SparsifySettings:
        if any(not 0.0 <= p <= 1.0 for p in self.grid):
            raise ValueError(f"Sparsity grid entries must lie in [0, 1], got {self.grid}")
        return self


class EnsembleSettings(BaseModel):
    """surrogate_seed None crafts the attack on the base network itself and transfers it to the ensemble"""
    n_members: int = Field(default=10, ge=1)
    attack: AttackConfig = AttackConfig()
    surrogate_seed: Optional[int] = 1
    diversity_layer: int = Field(default=1, ge=1)
    n_finetune_checkpoints: int = Field(default=10, ge=1)


class ComposeSettings(BaseModel):
    sparsity: float = Field(default=0.3, ge=0.0, le=1.0)
    head_init_scale: float = Field(default=0.1, ge=0.0)
    ref_point: RefPoint = RefPoint.CURRENT
    schedule: SparsitySchedule = SparsitySchedule.LINEAR


class SpectrumSettings(BaseModel):
    tol_rel: float = Field(default=1e-6, gt=0.0)
    anchor_batch_size: int = Field(default=256, ge=1)
    output_mode: OutputMode = OutputMode.PRE_SOFTMAX


class ExperimentConfig(BaseModel):
    kind: ExperimentKind
    run_id: Optional[str] = None
    seed: int = 0
    dataset: DatasetConfig = BlobsDataset()
    test_fraction: float = Field(default=0.25, gt=0.0, lt=1.0)
    network: NetworkConfig = NetworkConfig()
    training: TrainingConfig = TrainingConfig()
    path: PathConfig = PathConfig()
    base_checkpoint: Optional[FilePath] = None
    out_dir: Optional[Path] = None

    continual: ContinualSettings = ContinualSettings()
    sparsify: SparsifySettings = SparsifySettings()
    ensemble: EnsembleSettings = EnsembleSettings()
    compose: ComposeSettings = ComposeSettings()
    spectrum: SpectrumSettings = SpectrumSettings()

    @model_validator(mode="after")
    def check_task_count(self) -> ExperimentConfig:
        if self.kind is ExperimentKind.COMPOSE and self.n_tasks < 2:
            raise ValueError("compose needs two tasks (set dataset.n_tasks or two class_groups)")
        return self

    @property
    def n_tasks(self) -> int:
        if isinstance(self.dataset, BlobsDataset):
            return self.dataset.n_tasks
        return len(self.dataset.class_groups)

    @property
    def resolved_run_id(self) -> str:
        return self.run_id or f"{self.kind.value}-seed{self.seed}"

    def with_seed(self, seed: int) -> ExperimentConfig:
        """Seed override: the run, training and path seeds all follow it"""
        return self.model_copy(update={
            "seed": seed,
            "training": self.training.model_copy(update={"seed": seed}),
            "path": self.path.model_copy(update={"seed": seed}),
        })
