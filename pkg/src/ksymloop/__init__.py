"""Loop-group tools for k-symmetric harmonic maps: Laurent loops, Hardy-space factorization,
twisted loops and flags, holomorphic potentials and Grassmannian geometry."""

from . import catalog, dpw, geometry, hardy, loops, symmetry
from .dpw import Potential, ZGrid, extended_solution, integrate_potential, verify_extended
from .errors import KSymLoopError
from .hardy import iwasawa_factor, span_image, subspace_distance
from .loops import MatrixLoop, VectorLoop, loop_mul, loop_star
from .symmetry import FlagPoint, TwistedAutomorphism, build_W, detwist, filtration_from_W

__version__ = "0.1.0"

__all__ = [
    "FlagPoint",
    "KSymLoopError",
    "MatrixLoop",
    "Potential",
    "TwistedAutomorphism",
    "VectorLoop",
    "ZGrid",
    "build_W",
    "catalog",
    "detwist",
    "dpw",
    "extended_solution",
    "filtration_from_W",
    "geometry",
    "hardy",
    "integrate_potential",
    "iwasawa_factor",
    "loop_mul",
    "loop_star",
    "loops",
    "span_image",
    "subspace_distance",
    "symmetry",
    "verify_extended",
]
