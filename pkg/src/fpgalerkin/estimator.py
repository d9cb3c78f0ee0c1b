"""eps-robust residual error indicators for one fixed-point Galerkin step.

For a step ``u_prev -> u_next`` with step size ``t`` the elementwise
indicator is

    eta_T^2 = a_T^2 ||t f_h - (u_next - u_prev)||_T^2
              + 1/2 sum_{E in T, E interior} eps^(-1/2) a_E ||eps [[grad w]]||_E^2,

with ``w = (u_next - u_prev) + t u_prev`` and cut-off weights
``a = min(1, h / sqrt(eps))``. The Laplacians that would appear in the
volume residual vanish for piecewise linear functions and are omitted.
The volume residual is itself piecewise linear, so its norm is computed
exactly with the local mass matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fpgalerkin.assembly import energy_norm, oscillation
from fpgalerkin.errors import StructureError
from fpgalerkin.mesh import Mesh, NodalFunction, peclet_weights


@dataclass(frozen=True, eq=False)
class EstimatorBreakdown:
    """Indicator values for one step.

    Attributes
    ----------
    eta_T : ndarray
        Squared elementwise indicators.
    osc : float
        ``||f(u_prev) - f_h||_{L2}``.
    eta_fem : float
        ``sqrt(t * osc**2 + sum(eta_T))``.
    eta_fp : float
        Energy norm of the increment ``u_next - u_prev``.
    total : float
        ``eta_fem + eta_fp``.
    """

    eta_T: np.ndarray
    osc: float
    eta_fem: float
    eta_fp: float
    total: float


def _outward_normals(mesh: Mesh, edges, tri):
    """Unit normals of ``edges`` pointing out of triangles ``tri``."""
    p = mesh.vertices[mesh.edges[edges, 0]]
    d = mesh.vertices[mesh.edges[edges, 1]] - p
    n = np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(d[:, 0], d[:, 1])[:, None]
    centroid = mesh.vertices[mesh.triangles[tri]].mean(axis=1)
    flip = np.einsum("ij,ij->i", centroid - p, n) > 0
    n[flip] *= -1.0
    return n


def edge_jumps(mesh: Mesh, w: NodalFunction) -> np.ndarray:
    """Normal-derivative jumps of ``w`` on all interior edges (``mesh.interior_edges`` order)."""
    edges = mesh.interior_edges
    a, b = mesh.edge_triangles[edges, 0], mesh.edge_triangles[edges, 1]
    g = w.gradients()
    n = _outward_normals(mesh, edges, a)
    # grad w_a . n_a + grad w_b . n_b with n_b = -n_a
    return np.einsum("ij,ij->i", g[a] - g[b], n)


def edge_jump(mesh: Mesh, E: int, w: NodalFunction) -> float:
    """Jump ``grad w|_a . n_a + grad w|_b . n_b`` across interior edge ``E``.

    The value does not depend on which neighbour is called ``a``.
    """
    if mesh.boundary_edge[E]:
        raise StructureError(f"edge {E} lies on the boundary")
    a, b = mesh.edge_triangles[E]
    g = w.gradients()
    n = _outward_normals(mesh, np.array([E]), np.array([a]))[0]
    return float((g[a] - g[b]) @ n)


def _volume_terms(mesh, r: NodalFunction):
    rv = r.values[mesh.triangles]
    return mesh.areas / 12.0 * (np.sum(rv * rv, axis=1) + np.sum(rv, axis=1) ** 2)


def _edge_terms(mesh, w, eps, alpha_E):
    """Per-interior-edge ``eps^(-1/2) a_E ||eps [[grad w]]||_E^2``."""
    jump = edge_jumps(mesh, w)
    h_E = mesh.edge_lengths[mesh.interior_edges]
    return eps ** -0.5 * alpha_E * (eps * jump) ** 2 * h_E


def element_indicators(mesh: Mesh, u_next, u_prev, f_h, t, eps, weights=None) -> np.ndarray:
    """Squared indicators ``eta_T^2`` for every triangle."""
    if weights is None:
        weights = peclet_weights(mesh, eps)
    delta = u_next - u_prev
    residual = t * f_h - delta
    w = delta + t * u_prev
    vol = weights.alpha_T**2 * _volume_terms(mesh, residual)
    edge = _edge_terms(mesh, w, eps, weights.alpha_E)
    edges = mesh.interior_edges
    # each interior edge is shared by two triangles, each taking half
    per_tri = np.bincount(mesh.edge_triangles[edges].ravel(),
                          weights=np.repeat(0.5 * edge, 2), minlength=mesh.n_triangles)
    return vol + per_tri


def element_indicator(mesh: Mesh, T: int, u_next, u_prev, f_h, t, eps, weights=None) -> float:
    """Squared indicator ``eta_T^2`` of a single triangle."""
    return float(element_indicators(mesh, u_next, u_prev, f_h, t, eps, weights)[T])


def fem_estimator(mesh: Mesh, problem, u_next, u_prev, f_h, t):
    """Discretisation estimator for one step.

    Returns
    -------
    eta_fem : float
        ``sqrt(t * osc**2 + sum_T eta_T^2)``
    eta_T : ndarray
        Squared elementwise indicators, used for marking.
    osc : float
        ``||f(u_prev) - f_h||_{L2}``.
    """
    eta_T = element_indicators(mesh, u_next, u_prev, f_h, t, problem.eps)
    osc = oscillation(mesh, problem, u_prev, f_h)
    return float(np.sqrt(t * osc**2 + eta_T.sum())), eta_T, osc


def fp_indicator(B, u_next, u_prev) -> float:
    """Energy norm of the increment. Accepts interior coefficient vectors or
    :class:`NodalFunction` objects."""
    if isinstance(u_next, NodalFunction):
        u_next = u_next.interior
    if isinstance(u_prev, NodalFunction):
        u_prev = u_prev.interior
    return energy_norm(B, np.asarray(u_next) - np.asarray(u_prev))


def total_bound(eta_fem: float, eta_fp: float) -> float:
    """Upper bound ``eta_fem + eta_fp``, with the unknown generic constant taken as one."""
    return eta_fem + eta_fp


def estimate(mesh: Mesh, problem, B, u_next, u_prev, f_h, t) -> EstimatorBreakdown:
    eta_fem, eta_T, osc = fem_estimator(mesh, problem, u_next, u_prev, f_h, t)
    eta_fp = fp_indicator(B, u_next, u_prev)
    return EstimatorBreakdown(eta_T, osc, eta_fem, eta_fp, total_bound(eta_fem, eta_fp))
