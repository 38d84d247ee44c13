"""Numerical experiments for mixed local-nonlocal elliptic operators on smooth domains."""

from .errors import (ConfigError, ConvergenceError, GeometryError, KernelError, MixregError,
                     PolicyCycleError, ProjectionError, QuadratureError, ResourceLimitError)
from .geometry import Domain, ball, collar_region, ellipse, star
from .grid import GridFunction, Lattice
from .kernels import Kernel, check_assumption, make_fractional, make_subordinate, modified_kernel
from .operators import QuadratureScheme, apply_L, apply_nonlocal
from .solver import assemble, solve_hjb, solve_linear, solve_semilinear

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvergenceError", "GeometryError", "KernelError", "MixregError",
    "PolicyCycleError", "ProjectionError", "QuadratureError", "ResourceLimitError",
    "Domain", "ball", "collar_region", "ellipse", "star", "GridFunction", "Lattice",
    "Kernel", "check_assumption", "make_fractional", "make_subordinate", "modified_kernel",
    "QuadratureScheme", "apply_L", "apply_nonlocal", "assemble", "solve_hjb", "solve_linear",
    "solve_semilinear",
]
