"""P1 finite element assembly on :class:`~fpgalerkin.mesh.Mesh`.

Matrices are assembled over all vertices and restricted to interior
vertices by index masking (homogeneous Dirichlet conditions). Nonlinear
integrands use a six-point rule exact for polynomials of degree four.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from fpgalerkin.errors import DomainError
from fpgalerkin.linsolve import as_csr, cg_solve
from fpgalerkin.mesh import Mesh, NodalFunction

__all__ = [
    "NodalFunction", "QUAD_DEG4", "QUAD_DEG5", "assemble_mass", "assemble_stiffness",
    "energy_error", "energy_norm", "iteration_matrix", "l2_project", "load_vector",
    "oscillation", "project_nonlinearity", "quadrature_points", "restrict",
]


def _orbit_rule(orbits, centroid_weight=None):
    pts, wts = [], []
    if centroid_weight is not None:
        pts.append([1 / 3, 1 / 3, 1 / 3])
        wts.append(centroid_weight)
    for a, w in orbits:
        b = 1.0 - 2.0 * a
        pts += [[a, a, b], [a, b, a], [b, a, a]]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


# barycentric points and weights normalised to sum to one (multiply by |T|)
QUAD_DEG4 = _orbit_rule([
    (0.44594849091596488632, 0.22338158967801146570),
    (0.091576213509770743460, 0.10995174365532186764),
])
_s15 = np.sqrt(15.0)
QUAD_DEG5 = _orbit_rule([
    ((6.0 - _s15) / 21.0, (155.0 - _s15) / 1200.0),
    ((6.0 + _s15) / 21.0, (155.0 + _s15) / 1200.0),
], centroid_weight=9.0 / 40.0)

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def worker_count() -> int:
    """Worker count from ``FPG_THREADS``; one when unset."""
    try:
        return max(1, int(os.environ.get("FPG_THREADS", "1")))
    except ValueError:
        return 1


def _element_map(func, n, *arrays):
    """Apply ``func`` to element-aligned arrays, possibly in parallel chunks.

    Chunks are concatenated in element order, so the result does not depend
    on the number of workers.
    """
    workers = worker_count()
    if workers == 1 or n < 4096:
        return func(*arrays)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    chunks = [tuple(a[lo:hi] for a in arrays) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda c: func(*c), chunks))
    return np.concatenate(parts, axis=0)


def _scatter_matrix(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


def restrict(K, mesh: Mesh):
    """Rows and columns of interior vertices only."""
    idx = mesh.interior_vertices
    return as_csr(K[idx][:, idx])


def local_stiffness(mesh: Mesh) -> np.ndarray:
    g = mesh.barycentric_gradients
    return mesh.areas[:, None, None] * np.einsum("mik,mjk->mij", g, g)


def local_mass(mesh: Mesh) -> np.ndarray:
    return mesh.areas[:, None, None] * _LOCAL_MASS[None]


def assemble_stiffness(mesh: Mesh, full=False):
    """Stiffness matrix ``A_ik = int grad(phi_i) . grad(phi_k)``.

    With ``full=True`` boundary vertices are kept.
    """
    A = _scatter_matrix(mesh, local_stiffness(mesh))
    return A if full else restrict(A, mesh)


def assemble_mass(mesh: Mesh, full=False):
    """Consistent mass matrix ``M_ik = int phi_i phi_k``."""
    M = _scatter_matrix(mesh, local_mass(mesh))
    return M if full else restrict(M, mesh)


def iteration_matrix(M, A, eps):
    """``B = M + eps*A``, the Gram matrix of the eps-weighted H1 inner product."""
    if M.shape != A.shape:
        raise DomainError(f"dimension mismatch: M {M.shape}, A {A.shape}")
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    return as_csr(M + eps * A)


def quadrature_points(mesh: Mesh, rule=QUAD_DEG4) -> np.ndarray:
    """Physical quadrature points, shape (M, nq, 2)."""
    lam, _ = rule
    return np.einsum("qi,mid->mqd", lam, mesh.vertices[mesh.triangles])


def _at_quadrature(u: NodalFunction, rule):
    lam, _ = rule
    return u.values[u.mesh.triangles] @ lam.T


def _nonlinear_values(mesh, problem, u, rule):
    x = quadrature_points(mesh, rule)
    uq = _at_quadrature(u, rule)
    return _element_map(lambda xx, uu: np.asarray(problem.f(xx, uu), dtype=float),
                        mesh.n_triangles, x, uq)


def _integrate_against_hats(mesh, gq, rule):
    """Vector ``(int g phi_i)_i`` over all vertices from quadrature values ``gq`` (M, nq)."""
    lam, w = rule
    local = mesh.areas[:, None] * ((gq * w[None, :]) @ lam)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def load_vector(mesh: Mesh, problem, u: NodalFunction, full=False, rule=QUAD_DEG4):
    """Load vector ``b_i = int f(x, u_h(x)) phi_i(x) dx`` over interior vertices."""
    b = _integrate_against_hats(mesh, _nonlinear_values(mesh, problem, u, rule), rule)
    return b if full else b[mesh.interior_vertices]


def _project(mesh, M_full, gq, rule, rtol):
    rhs = _integrate_against_hats(mesh, gq, rule)
    p, _, _ = cg_solve(M_full, rhs, rtol=rtol, precond="jacobi")
    return NodalFunction(mesh, p)


def l2_project(mesh: Mesh, M_full, g, rule=QUAD_DEG4, rtol=1e-12) -> NodalFunction:
    """L2 projection of ``g(points) -> values`` onto the full P1 space.

    ``M_full`` is the mass matrix including boundary vertices.
    """
    gq = np.asarray(g(quadrature_points(mesh, rule)), dtype=float)
    return _project(mesh, M_full, gq, rule, rtol)


def project_nonlinearity(mesh: Mesh, M_full, problem, u: NodalFunction,
                         rule=QUAD_DEG4, rtol=1e-12) -> NodalFunction:
    """``f_h``: L2 projection of ``x -> f(x, u_h(x))`` onto the full P1 space."""
    return _project(mesh, M_full, _nonlinear_values(mesh, problem, u, rule), rule, rtol)


def oscillation(mesh: Mesh, problem, u: NodalFunction, f_h: NodalFunction, rule=QUAD_DEG4):
    """``||f(., u_h) - f_h||_{L2}`` by quadrature (no step-size factor)."""
    _, w = rule
    diff = _nonlinear_values(mesh, problem, u, rule) - _at_quadrature(f_h, rule)
    return float(np.sqrt(np.sum(mesh.areas * ((diff * diff) @ w))))


def energy_norm(B, d) -> float:
    """``sqrt(d^T B d)``."""
    d = np.asarray(d, dtype=float)
    if d.shape != (B.shape[0],):
        raise DomainError(f"dimension mismatch: matrix {B.shape}, vector {d.shape}")
    return float(np.sqrt(max(d @ (B @ d), 0.0)))


def energy_error(u: NodalFunction, exact, exact_grad, eps, rule=QUAD_DEG4) -> float:
    """``(||u - u_h||^2 + eps ||grad(u - u_h)||^2)^(1/2)`` by elementwise quadrature."""
    mesh = u.mesh
    _, w = rule
    x = quadrature_points(mesh, rule)
    e0 = exact(x) - _at_quadrature(u, rule)
    e1 = exact_grad(x) - u.gradients()[:, None, :]
    dens = e0 * e0 + eps * np.sum(e1 * e1, axis=-1)
    return float(np.sqrt(np.sum(mesh.areas * (dens @ w))))
