"""Numerical laboratory for symbol-level tensor tomography."""

from ._kernels import HAS_NUMBA, backend
from .spherical_harmonics import HarmonicBasis, SphereFunction, build_basis
from .tensor_algebra import PreconditionError, ShapeError, SymTensor

__version__ = "0.1.0"

__all__ = [
    "HAS_NUMBA",
    "HarmonicBasis",
    "PreconditionError",
    "ShapeError",
    "SphereFunction",
    "SymTensor",
    "backend",
    "build_basis",
]
