from typing import Dict, Type

from .base_solver import DirectionSolver
from .fip import FipDirectionSolver
from .geodesic import GeodesicDirectionSolver

from shared_models.path import PathMode


SOLVER_MAP: Dict[PathMode, Type[DirectionSolver]] = {
    PathMode.FIP: FipDirectionSolver,
    PathMode.GEODESIC: GeodesicDirectionSolver,
}
