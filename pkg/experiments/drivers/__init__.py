from typing import Callable, Dict, Optional

from .continual import run_continual
from .sparsify import run_sparsify
from .ensemble import run_ensemble
from .compose import run_compose, compose_operators
from .spectrum import run_spectrum, save_spectrum_report

from experiments.output_dir import OutputDir
from experiments.run_log import RunLog
from shared_models.experiment_config import ExperimentConfig, ExperimentKind

Driver = Callable[[ExperimentConfig, Optional[OutputDir]], RunLog]

DRIVERS: Dict[ExperimentKind, Driver] = {
    ExperimentKind.CONTINUAL: run_continual,
    ExperimentKind.SPARSIFY: run_sparsify,
    ExperimentKind.ENSEMBLE: run_ensemble,
    ExperimentKind.COMPOSE: run_compose,
    ExperimentKind.SPECTRUM: run_spectrum,
}
