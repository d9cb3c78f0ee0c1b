"""Model problems ``-eps*Lap(u) = f(x, u)`` on the unit square with ``u = 0`` on the boundary.

``f`` and ``df_du`` take an array of points of shape ``(..., 2)`` and an
array of values of shape ``(...)`` and must be vectorised.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from fpgalerkin.contraction import ContractionParams
from fpgalerkin.errors import DomainError, UnknownProblemError


@dataclass(frozen=True)
class ProblemSpec:
    """A semilinear problem and the constants governing its fixed-point iteration.

    ``L_f`` is the Lipschitz constant of ``f`` in ``u`` and ``c_f`` the
    monotonicity constant in ``(f(x,u)-f(x,w))(u-w) <= -c_f (u-w)^2``.
    The iteration uses ``L = max(1, L_f)`` and ``c = min(1, c_f)``.
    """

    name: str
    eps: float
    f: Callable = field(repr=False)
    df_du: Callable = field(repr=False)
    L_f: float
    c_f: float
    exact: Optional[Callable] = field(default=None, repr=False)
    exact_grad: Optional[Callable] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")
        if not (self.L_f >= self.c_f > 0):
            raise DomainError(f"need L_f >= c_f > 0, got L_f={self.L_f}, c_f={self.c_f}")

    @property
    def L(self) -> float:
        return max(1.0, self.L_f)

    @property
    def c(self) -> float:
        return min(1.0, self.c_f)

    @property
    def contraction(self) -> ContractionParams:
        return ContractionParams.optimal(self.c, self.L)

    @property
    def t(self) -> float:
        return self.contraction.t

    @property
    def alpha(self) -> float:
        return self.contraction.alpha


def _sigmoid_decay(x, u):
    s = u - 1.0
    return -s / (1.0 + np.exp(-s * s))


def _sigmoid_decay_du(x, u):
    s = u - 1.0
    e = np.exp(-s * s)
    return -(1.0 + e * (1.0 + 2.0 * s * s)) / (1.0 + e) ** 2


def _sin_sin(x):
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def _sin_sin_grad(x):
    sx, sy = np.sin(np.pi * x[..., 0]), np.sin(np.pi * x[..., 1])
    cx, cy = np.cos(np.pi * x[..., 0]), np.cos(np.pi * x[..., 1])
    return np.pi * np.stack([cx * sy, sx * cy], axis=-1)


def paper_ex2(eps):
    """``f(u) = (1 - u) / (1 + exp(-(u - 1)^2))`` with ``L_f = 1.3``, ``c_f = 1/2``."""
    return ProblemSpec("paper-ex2", eps, _sigmoid_decay, _sigmoid_decay_du,
                       L_f=1.3, c_f=0.5, label="(1-u)/(1+exp(-(u-1)^2))")


def linear_manufactured(eps):
    """``f = -u + g`` with exact solution ``sin(pi x) sin(pi y)``."""
    scale = 2.0 * np.pi**2 * eps + 1.0

    def f(x, u):
        return -u + scale * _sin_sin(x)

    def df_du(x, u):
        return -np.ones_like(u)

    return ProblemSpec("linear-manufactured", eps, f, df_du, L_f=1.0, c_f=1.0,
                       exact=_sin_sin, exact_grad=_sin_sin_grad,
                       label="-u + (2 pi^2 eps + 1) sin(pi x) sin(pi y)")


def linear_layer(eps):
    """``f = 1 - u``: a linear reaction-diffusion model with boundary layers."""
    return ProblemSpec("linear-layer", eps, lambda x, u: 1.0 - u,
                       lambda x, u: -np.ones_like(u), L_f=1.0, c_f=1.0, label="1 - u")


def zero(eps):
    """``f = 0``. Degenerate; the nominal constants make the step size 1."""
    return ProblemSpec("zero", eps, lambda x, u: np.zeros_like(u),
                       lambda x, u: np.zeros_like(u), L_f=1.0, c_f=1.0, label="0")


REGISTRY = {
    "paper-ex2": paper_ex2,
    "linear-manufactured": linear_manufactured,
    "linear-layer": linear_layer,
    "zero": zero,
}


def problem_registry(name: str, eps: float = 1.0) -> ProblemSpec:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; choose from {', '.join(sorted(REGISTRY))}") from None
    return factory(eps)
