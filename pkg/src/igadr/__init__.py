"""NURBS isogeometric solver for advection-diffusion-reaction systems.

Semi-Lagrangian transport along characteristics, BDF2 diffusion and RK4
reaction stages combined by Strang splitting.
"""

from .config import RunConfig, load_config, parse_config, serialize
from .convergence import ErrorReport, convergence_study, error_norms
from .geometry import Mesh, Patch, preset_geometry
from .output import write_snapshot
from .problems import PROBLEMS, ProblemSpec, get_problem
from .stepping import FieldState, SimulationResult, run_simulation, strang_step

__all__ = [
    "ErrorReport",
    "FieldState",
    "Mesh",
    "PROBLEMS",
    "Patch",
    "ProblemSpec",
    "RunConfig",
    "SimulationResult",
    "convergence_study",
    "error_norms",
    "get_problem",
    "load_config",
    "parse_config",
    "preset_geometry",
    "run_simulation",
    "serialize",
    "strang_step",
    "write_snapshot",
]
