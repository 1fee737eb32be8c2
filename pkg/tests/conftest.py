from typing import Tuple

import numpy as np
import pytest
from loguru import logger

from core_net.network import init_weights
from experiments.datasets import TaskData, gen_blobs, split_train_test
from experiments.training import train_base
from shared_models.experiment_config import TrainingConfig
from shared_models.network import Activation, Batch, NetworkSpec, WeightVector


@pytest.fixture(autouse=True, scope="session")
def quiet_logs():
    logger.remove()
    logger.add(lambda _: None, level="WARNING")
    yield


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def scalar_linear() -> Tuple[NetworkSpec, Batch]:
    """f(x; w) = w . x with a single input x = (1, 2); its metric is (x x^T)"""
    spec = NetworkSpec.mlp([2, 1], use_bias=False)
    return spec, Batch(inputs=np.array([[1.0, 2.0]]))


@pytest.fixture
def tanh_net(rng) -> Tuple[NetworkSpec, WeightVector, Batch]:
    spec = NetworkSpec.mlp([3, 5, 4, 2], hidden=Activation.TANH)
    w = init_weights(spec, seed=3)
    return spec, w, Batch(inputs=rng.standard_normal((6, 3)), labels=rng.integers(0, 2, 6))


def make_blob_task(task_id: int = 1, seed: int = 0, n_per_class: int = 60) -> TaskData:
    data = gen_blobs(2, n_per_class, 2, separation=10.0, seed=seed, task_id=task_id)
    train, test = split_train_test(data, 0.25, seed=seed)
    return TaskData(task_id=task_id, n_classes=2, train=train, test=test, name=f"blobs-{seed}")


@pytest.fixture(scope="session")
def blob_task() -> TaskData:
    return make_blob_task()


@pytest.fixture(scope="session")
def trained_blob_classifier(blob_task) -> Tuple[NetworkSpec, WeightVector]:
    """2-16-2 ReLU classifier trained to separate the two blobs"""
    spec = NetworkSpec.mlp([2, 16, 2], head_widths=[2], first_task_id=blob_task.task_id)
    w, _ = train_base(spec, blob_task.train, TrainingConfig(lr=0.05, epochs=30, seed=0))
    return spec, w
