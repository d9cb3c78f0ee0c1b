"""Exception types shared across the solver."""


class DomainError(ValueError):
    """A parameter lies outside the set where the requested quantity is defined."""


class StructureError(ValueError):
    """Mesh or function objects are structurally incompatible."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations.

    Attributes
    ----------
    iterations : int
    residual : float
        Achieved relative residual at exit.
    """

    def __init__(self, message, iterations=0, residual=float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class BreakdownError(ConvergenceError):
    """Conjugate gradients met a non-positive curvature (matrix not SPD)."""


class UnknownProblemError(KeyError):
    """Requested problem name is not in the registry."""
