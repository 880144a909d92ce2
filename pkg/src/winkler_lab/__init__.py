"""Clamped Kirchhoff plates on a Winkler foundation: forward solves, coefficient
reconstruction and numerical audits of a Hoelder stability estimate."""
from .fields import ScalarField, StencilError
from .forward import AssemblyError, ForwardProblem, SolverError, assemble, solve
from .grid import GeometryError, build_rectangle
from .inverse import ReconstructionConfig, measure, reconstruct
from .kernels import BACKEND
from .material import make_general, make_isotropic, make_orthotropic, plate_tensor

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "BACKEND", "ForwardProblem", "GeometryError", "ReconstructionConfig",
    "ScalarField", "SolverError", "StencilError", "assemble", "build_rectangle",
    "make_general", "make_isotropic", "make_orthotropic", "measure", "plate_tensor",
    "reconstruct", "solve",
]
