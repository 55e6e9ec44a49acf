from .mesh import Mesh, shape_eval, GAUSS_POINTS, GAUSS_WEIGHTS
from .assembly import Assembler, RegionModel, InvertedElementError
from .solver import LinearSolveError, NewtonResult, SolveControls, linear_solve, newton_solve
from .march import BoundaryCondition, Simulation, SolverFailure, time_march

__all__ = [
    "Mesh", "shape_eval", "GAUSS_POINTS", "GAUSS_WEIGHTS",
    "Assembler", "RegionModel", "InvertedElementError",
    "LinearSolveError", "NewtonResult", "SolveControls", "linear_solve", "newton_solve",
    "BoundaryCondition", "Simulation", "SolverFailure", "time_march",
]
