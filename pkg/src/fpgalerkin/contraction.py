"""Closed-form diagnostics for damped fixed-point (Zarantonello) iterations.

For an operator F that is L-Lipschitz and c-strongly monotone, the map
``u -> u - t J^{-1} F(u)`` contracts with factor ``sqrt(1 - 2ct + (Lt)^2)``
for ``0 < t < 2c/L^2``. The helpers below evaluate that factor and the
a priori / a posteriori bounds that follow from Banach's fixed point
theorem. Everything here is a pure function of plain floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fpgalerkin.errors import DomainError


def _check_constants(c, L):
    if not (c > 0 and L > 0):
        raise DomainError(f"constants must be positive, got c={c}, L={L}")
    if c > L:
        raise DomainError(f"monotonicity constant c={c} exceeds Lipschitz constant L={L}")


def _check_alpha(alpha):
    # alpha = 0 occurs for c = L at the optimal step and is a valid contraction
    if not (0.0 <= alpha < 1.0):
        raise DomainError(f"contraction factor must lie in [0, 1), got {alpha}")


def optimal_step(c: float, L: float) -> float:
    """Step size ``c / L**2`` minimising the contraction factor."""
    _check_constants(c, L)
    return c / L**2


def contraction_factor(c: float, L: float, t: float) -> float:
    """Contraction factor ``sqrt(1 - 2ct + (Lt)^2)`` of the damped iteration.

    Raises
    ------
    DomainError
        If ``t`` is outside ``(0, 2c/L^2)``, where the map fails to contract.
    """
    _check_constants(c, L)
    ft = 1.0 - 2.0 * c * t + (L * t) ** 2
    if not (t > 0) or ft >= 1.0:
        raise DomainError(f"step t={t} outside (0, {2 * c / L**2}); f(t)={ft} >= 1")
    # f(t) >= 1 - (c/L)^2 >= 0 analytically; clip rounding noise at c = L
    return math.sqrt(max(ft, 0.0))


@dataclass(frozen=True)
class ContractionParams:
    """Constants of a damped fixed-point iteration.

    ``alpha`` is derived from ``(c, L, t)`` and never passed in.
    """

    c: float
    L: float
    t: float

    def __post_init__(self):
        # validates c, L and t in one go
        contraction_factor(self.c, self.L, self.t)

    @classmethod
    def optimal(cls, c, L):
        return cls(c, L, optimal_step(c, L))

    @property
    def alpha(self) -> float:
        return contraction_factor(self.c, self.L, self.t)


def apriori_banach(alpha: float, n: int, d01: float) -> float:
    """Banach a priori bound ``alpha**n / (1 - alpha) * ||x1 - x0||``."""
    _check_alpha(alpha)
    if n < 0:
        raise DomainError(f"iteration count must be nonnegative, got {n}")
    return alpha**n / (1.0 - alpha) * d01


def apriori_discrete(alpha: float, n: int, d01: float, eta_h: float) -> float:
    """A priori bound for the discretised iteration.

    Returns ``(alpha**n * d01 + eta_h) / (1 - alpha)``, i.e. the Banach
    bound plus the worst-case distance ``eta_h / (1 - alpha)`` between the
    discrete and continuous iterates.
    """
    _check_alpha(alpha)
    if n < 0:
        raise DomainError(f"iteration count must be nonnegative, got {n}")
    return (alpha**n * d01 + eta_h) / (1.0 - alpha)


def residual_bound(L: float, alpha: float, n: int, d01: float, eta_h: float) -> float:
    """Dual-norm bound on the residual ``F(u_h^n)``: ``L`` times :func:`apriori_discrete`."""
    if not L > 0:
        raise DomainError(f"Lipschitz constant must be positive, got {L}")
    return L * apriori_discrete(alpha, n, d01, eta_h)


def tracking_recursion(alpha: float, eta_h: float, n: int) -> np.ndarray:
    """Distance recursion ``e_{k+1} = alpha*e_k + eta_h`` with ``e_0 = 0``.

    Returns the whole sequence ``(e_0, ..., e_n)``. Every entry is bounded
    by ``eta_h / (1 - alpha)``.
    """
    _check_alpha(alpha)
    if eta_h < 0:
        raise DomainError(f"eta_h must be nonnegative, got {eta_h}")
    if n < 0:
        raise DomainError(f"length must be nonnegative, got {n}")
    seq = np.zeros(n + 1)
    for k in range(n):
        seq[k + 1] = alpha * seq[k] + eta_h
    return seq


def abstract_aposteriori(c: float, L: float, eta_h: float, increment_norm: float) -> float:
    """A posteriori bound ``(L/c)^2 eta_h + (L/c)(1 + L/c) ||u^{n+1} - u^n||``."""
    _check_constants(c, L)
    r = L / c
    return r * r * eta_h + r * (1.0 + r) * increment_norm
