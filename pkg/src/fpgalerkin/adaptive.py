"""The fully adaptive fixed-point Galerkin loop.

Each step performs one damped fixed-point update on the current mesh,
evaluates the discretisation indicator ``eta_fem`` and the linearisation
indicator ``eta_fp``, and then either refines (when ``eta_fp < theta *
eta_fem``) or iterates again on the same mesh.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from fpgalerkin.assembly import (
    assemble_mass,
    assemble_stiffness,
    iteration_matrix,
    load_vector,
    project_nonlinearity,
    restrict,
)
from fpgalerkin.errors import DomainError, StructureError
from fpgalerkin.estimator import EstimatorBreakdown, estimate
from fpgalerkin.linsolve import cg_solve
from fpgalerkin.mesh import Mesh, NodalFunction, prolongate, refine
from fpgalerkin.problems import ProblemSpec

logger = logging.getLogger(__name__)


class Action(str, enum.Enum):
    ITERATE = "Iterate"
    REFINE = "Refine"
    STOP = "Stop"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class AdaptiveConfig:
    """Parameters of :func:`run`.

    ``marking`` is ``"dorfler"`` (bulk criterion with ``marking_fraction``)
    or ``"uniform"`` (every triangle is bisected twice on each refinement,
    halving the mesh size).
    Wall-clock times are recorded only when ``timing`` is set, which keeps
    record sequences reproducible by default.
    """

    problem: ProblemSpec
    theta: float = 0.5
    marking_fraction: float = 0.5
    max_dof: int = 20000
    h_min: Optional[float] = None
    rtol_linear: float = 1e-10
    max_outer: int = 10000
    marking: str = "dorfler"
    stop_tol: float = 1e-12
    timing: bool = False

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError(f"theta must be positive, got {self.theta}")
        if not 0 < self.marking_fraction < 1:
            raise DomainError(f"marking_fraction must lie in (0, 1), got {self.marking_fraction}")
        if self.marking not in ("dorfler", "uniform"):
            raise DomainError(f"unknown marking strategy {self.marking!r}")
        if self.max_dof < 1 or self.max_outer < 1:
            raise DomainError("max_dof and max_outer must be positive")


@dataclass(frozen=True)
class AdaptiveRecord:
    step: int
    dof: int
    eta_fem: float
    eta_fp: float
    osc: float
    total: float
    action: Action
    cg_iters: int
    wall_ms: float


@dataclass
class RunResult:
    records: List[AdaptiveRecord]
    mesh: Mesh
    u: NodalFunction
    stop_reason: str

    @property
    def converged(self) -> bool:
        return self.stop_reason != "max_outer"


class DiscreteSpace:
    """Matrices of the zero-trace P1 space on one mesh."""

    def __init__(self, mesh: Mesh, eps: float):
        self.mesh = mesh
        self.M_full = assemble_mass(mesh, full=True)
        self.A_full = assemble_stiffness(mesh, full=True)
        self.M = restrict(self.M_full, mesh)
        self.A = restrict(self.A_full, mesh)
        self.B = iteration_matrix(self.M, self.A, eps)


def center_hat(mesh: Mesh) -> NodalFunction:
    """Hat function equal to one at the vertex (1/2, 1/2)."""
    hit = np.flatnonzero(np.all(mesh.vertices == 0.5, axis=1))
    if hit.size != 1 or mesh.boundary_vertex[hit[0]]:
        raise DomainError("mesh has no interior vertex at (1/2, 1/2)")
    u = NodalFunction.zeros(mesh)
    u.values[hit[0]] = 1.0
    return u


def fixed_point_step(mesh: Mesh, problem: ProblemSpec, B, A, M, u_prev: NodalFunction, t,
                     rtol=1e-10, full_output=False):
    """One damped fixed-point update on a fixed mesh.

    Solves ``B u_next = B u_prev - t*eps*A u_prev + t*b(u_prev)`` over the
    interior vertices. The system is solved for the increment
    ``u_next - u_prev``, so that ``rtol`` controls the increment relative to
    its own size.

    Parameters
    ----------
    B, A, M : sparse matrices
        Interior iteration, stiffness and mass matrices (``B = M + eps*A``).
    full_output : bool
        Also return the number of CG iterations.
    """
    n = mesh.dof
    if B.shape != (n, n) or A.shape != (n, n) or M.shape != (n, n):
        raise StructureError("matrices do not match the mesh")
    if u_prev.mesh is not mesh:
        raise StructureError("iterate lives on a different mesh")
    up = u_prev.interior
    rhs = t * (load_vector(mesh, problem, u_prev) - problem.eps * (A @ up))
    delta, iters, _ = cg_solve(B, rhs, rtol=rtol)
    u_next = NodalFunction.from_interior(mesh, up + delta)
    return (u_next, iters) if full_output else u_next


def decide_action(eta_fp: float, eta_fem: float, theta: float) -> Action:
    """Refine iff ``eta_fp < theta * eta_fem``, otherwise iterate."""
    return Action.REFINE if eta_fp < theta * eta_fem else Action.ITERATE


def dorfler_mark(eta_T_squared, marking_fraction: float) -> np.ndarray:
    """Smallest set of triangles carrying ``marking_fraction`` of the squared estimator.

    Triangles are taken greedily by decreasing indicator, ties by index.
    """
    eta = np.asarray(eta_T_squared, dtype=float)
    if eta.size == 0:
        raise DomainError("cannot mark on an empty mesh")
    if np.any(eta < 0):
        raise DomainError("indicators must be nonnegative")
    order = np.lexsort((np.arange(eta.size), -eta))
    cum = np.cumsum(eta[order])
    goal = marking_fraction * cum[-1]
    if goal <= 0.0:
        return np.zeros(0, dtype=np.int64)
    k = int(np.searchsorted(cum, goal, side="left")) + 1
    return np.sort(order[:k])


def run(config: AdaptiveConfig, initial_mesh: Mesh, u0: NodalFunction,
        callback: Optional[Callable] = None) -> RunResult:
    """Run the adaptive loop until the dof budget, ``h_min`` or ``max_outer`` is hit.

    Every step appends one :class:`AdaptiveRecord`. A step whose decision
    would be to refine a mesh that already exceeds ``max_dof`` (or is
    finer than ``h_min``) is recorded as ``Stop`` instead. The run also
    stops once the total bound drops below ``stop_tol``.

    ``callback(record, mesh, u_next, breakdown)`` is invoked after every step.
    """
    problem = config.problem
    t = problem.t
    if u0.mesh is not initial_mesh:
        raise StructureError("initial guess lives on a different mesh")
    if not u0.in_v0h():
        raise DomainError("initial guess must vanish on the boundary")

    mesh = initial_mesh
    space = DiscreteSpace(mesh, problem.eps)
    u = u0
    records = []
    reason = "max_outer"
    for step in range(config.max_outer):
        start = time.perf_counter()
        u_next, iters = fixed_point_step(mesh, problem, space.B, space.A, space.M, u, t,
                                         rtol=config.rtol_linear, full_output=True)
        f_h = project_nonlinearity(mesh, space.M_full, problem, u)
        est: EstimatorBreakdown = estimate(mesh, problem, space.B, u_next, u, f_h, t)
        action = decide_action(est.eta_fp, est.eta_fem, config.theta)

        stop = None
        if est.total < config.stop_tol:
            stop = "converged"
        elif action is Action.REFINE and mesh.dof > config.max_dof:
            stop = "max_dof"
        elif action is Action.REFINE and config.h_min is not None and mesh.h < config.h_min:
            stop = "h_min"
        elif step == config.max_outer - 1:
            stop = "max_outer"
        if stop is not None:
            action = Action.STOP

        marked = None
        if action is Action.REFINE:
            if config.marking == "uniform":
                marked = np.arange(mesh.n_triangles)
            else:
                marked = dorfler_mark(est.eta_T, config.marking_fraction)
                if marked.size == 0:
                    # all weight sits in the global oscillation term
                    marked = np.arange(mesh.n_triangles)

        wall_ms = 1e3 * (time.perf_counter() - start) if config.timing else 0.0
        record = AdaptiveRecord(step, mesh.dof, est.eta_fem, est.eta_fp, est.osc, est.total,
                                action, iters, wall_ms)
        records.append(record)
        if callback is not None:
            callback(record, mesh, u_next, est)
        logger.debug("step %d dof %d eta_fem %.3e eta_fp %.3e %s", step, mesh.dof,
                     est.eta_fem, est.eta_fp, action)

        u = u_next
        if stop is not None:
            reason = stop
            break
        if action is Action.REFINE:
            fine = refine(mesh, marked)
            u = prolongate(u, fine)
            if config.marking == "uniform":
                # second bisection level, so every uniform step halves h
                u = prolongate(u, refine(fine, np.arange(fine.n_triangles)))
                fine = u.mesh
            mesh = fine
            space = DiscreteSpace(mesh, problem.eps)

    if reason == "max_outer" and not records[-1].eta_fp < config.theta * records[-1].eta_fem:
        logger.warning("adaptive loop hit max_outer=%d with eta_fp=%.3e not below "
                       "theta*eta_fem=%.3e", config.max_outer, records[-1].eta_fp,
                       config.theta * records[-1].eta_fem)
    return RunResult(records, mesh, u, reason)
