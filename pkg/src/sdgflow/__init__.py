"""Staggered DG solver for Brinkman flow on polygonal meshes."""

from .mesh import (
    PrimalMesh,
    StaggeredMesh,
    build_distorted_grid,
    build_hanging_grid,
    build_square_grid,
    build_staggered,
    import_polygon_mesh,
)
from .spaces import DiscreteField, StaggeredSpaces
from .solver import SaddleSystem, assemble_blocks, build_system, solve, solve_case
from .verify import ConvergenceTable, ManufacturedCase, trig_case

__all__ = [
    "PrimalMesh",
    "StaggeredMesh",
    "build_distorted_grid",
    "build_hanging_grid",
    "build_square_grid",
    "build_staggered",
    "import_polygon_mesh",
    "DiscreteField",
    "StaggeredSpaces",
    "SaddleSystem",
    "assemble_blocks",
    "build_system",
    "solve",
    "solve_case",
    "ConvergenceTable",
    "ManufacturedCase",
    "trig_case",
]
