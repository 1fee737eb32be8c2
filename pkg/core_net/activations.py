from typing import Callable, Dict, Tuple

import numpy as np

from shared_models.network import Activation


def _identity(z: np.ndarray) -> np.ndarray:
    return z


def _identity_prime(z: np.ndarray) -> np.ndarray:
    return np.ones_like(z)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _relu_prime(z: np.ndarray) -> np.ndarray:
    # Subgradient at 0 is 0, shared by every gradient and Jacobian path
    return (z > 0.0).astype(np.float64)


def _tanh(z: np.ndarray) -> np.ndarray:
    return np.tanh(z)


def _tanh_prime(z: np.ndarray) -> np.ndarray:
    t = np.tanh(z)
    return 1.0 - t * t


ACTIVATION_MAP: Dict[Activation, Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]] = {
    Activation.IDENTITY: (_identity, _identity_prime),
    Activation.RELU: (_relu, _relu_prime),
    Activation.TANH: (_tanh, _tanh_prime),
}


def apply(activation: Activation, z: np.ndarray) -> np.ndarray:
    return ACTIVATION_MAP[activation][0](z)


def derivative(activation: Activation, z: np.ndarray) -> np.ndarray:
    return ACTIVATION_MAP[activation][1](z)
