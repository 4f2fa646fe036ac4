"""Finite element solvers for multiple-network poroelasticity (MPET).

Two discretizations are provided: a total-pressure scheme with
Taylor-Hood P2/P1 displacement and total pressure plus P1 network
pressures, and the classical displacement/pressure scheme.
"""

from .core import (STANDARD, TOTAL_PRESSURE, BoundaryConditions, MpetParameters, SourceData,
                   assemble_operator, energy, lame_from_E_nu)
from .mesh import (SKULL, VENTRICLE, WHOLE, Mesh, MeshError, build_annulus_mesh,
                   build_unit_square_mesh, read_mesh, refine_uniform, write_mesh)
from .timestepper import MpetState, TimeGrid, compatible_initial_state, run

__version__ = "0.1.0"

__all__ = [
    "STANDARD", "TOTAL_PRESSURE", "BoundaryConditions", "MpetParameters", "SourceData",
    "assemble_operator", "energy", "lame_from_E_nu", "SKULL", "VENTRICLE", "WHOLE", "Mesh",
    "MeshError", "build_annulus_mesh", "build_unit_square_mesh", "read_mesh", "refine_uniform",
    "write_mesh", "MpetState", "TimeGrid", "compatible_initial_state", "run",
]
