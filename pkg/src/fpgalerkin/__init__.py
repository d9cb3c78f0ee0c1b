"""Fully adaptive fixed-point Galerkin solver for -eps*Lap(u) = f(x, u).

The package couples a damped (Zarantonello) fixed-point linearization with
P1 finite elements on newest-vertex-bisection meshes and an eps-robust
residual error estimator that decides between iterating and refining.
"""
from fpgalerkin.errors import (
    BreakdownError,
    ConvergenceError,
    DomainError,
    StructureError,
    UnknownProblemError,
)

__version__ = "0.1.0"

__all__ = [
    "BreakdownError",
    "ConvergenceError",
    "DomainError",
    "StructureError",
    "UnknownProblemError",
    "__version__",
]
