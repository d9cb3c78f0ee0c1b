"""Conforming triangular meshes with newest-vertex bisection.

Every triangle ``[v0, v1, v2]`` is stored counter-clockwise with its
refinement edge in the first slot, ``(v0, v1)``. Bisecting it at the
midpoint ``m`` of that edge yields ``[v1, v2, m]`` and ``[v2, v0, m]``,
so ``m`` is the newest vertex of both children and the old edges
``(v1, v2)`` and ``(v2, v0)`` become their refinement edges.

Meshes are immutable. :func:`refine` returns a new mesh that remembers
its parent and the edges its new vertices were created on, which is all
:func:`prolongate` needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from fpgalerkin.errors import DomainError, StructureError

# local edge k of a triangle joins vertices _LOCAL_EDGES[k]
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


class Mesh:
    """Conforming triangulation of a polygon.

    Parameters
    ----------
    vertices : array_like, shape (N, 2)
    triangles : array_like, shape (M, 3)
        Counter-clockwise vertex triples, refinement edge first.
    generation : array_like, shape (M,), optional
        Number of bisections separating each triangle from the initial mesh.
    parent : Mesh, optional
        The mesh this one was refined from.
    parent_triangle : array_like, shape (M,), optional
        Index of the coarse triangle containing each triangle.
    new_vertex_edges : array_like, shape (K, 2), optional
        Coarse edge endpoints of vertices ``N - K, ..., N - 1`` created by
        the refinement that produced this mesh.
    """

    def __init__(self, vertices, triangles, generation=None, parent=None,
                 parent_triangle=None, new_vertex_edges=None):
        self.vertices = _frozen(vertices, float)
        self.triangles = _frozen(triangles, np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise StructureError("vertices must have shape (N, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise StructureError("triangles must have shape (M, 3)")
        m = len(self.triangles)
        self.generation = _frozen(np.zeros(m) if generation is None else generation, np.int64)
        self.parent = parent
        self.parent_triangle = None if parent_triangle is None else _frozen(parent_triangle, np.int64)
        self.new_vertex_edges = _frozen(
            np.zeros((0, 2)) if new_vertex_edges is None else new_vertex_edges, np.int64)
        self._build_topology()

    def _build_topology(self):
        t = self.triangles
        pairs = t[:, _LOCAL_EDGES].reshape(-1, 2)
        keys = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise StructureError("an edge is shared by more than two triangles")
        self.edges = _frozen(edges, np.int64)
        self.triangle_edges = _frozen(inverse.reshape(-1, 3), np.int64)

        # first and second incident triangle per edge, -1 for boundary edges
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        first = np.searchsorted(inverse[order], np.arange(len(edges)))
        et = np.full((len(edges), 2), -1, dtype=np.int64)
        et[:, 0] = tri_of[first]
        two = counts == 2
        et[two, 1] = tri_of[first[two] + 1]
        self.edge_triangles = _frozen(et, np.int64)
        self.boundary_edge = _frozen(counts == 1, bool)

        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[edges[self.boundary_edge].ravel()] = True
        self.boundary_vertex = _frozen(bv, bool)

    def __repr__(self):
        return (f"Mesh({self.n_vertices} vertices, {self.n_triangles} triangles, "
                f"{self.dof} dof)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return _frozen(np.flatnonzero(~self.boundary_vertex), np.int64)

    @property
    def dof(self) -> int:
        """Number of interior vertices, i.e. the dimension of the zero-trace P1 space."""
        return len(self.interior_vertices)

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return _frozen(np.flatnonzero(~self.boundary_edge), np.int64)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return _frozen(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]), float)

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return _frozen(np.hypot(d[:, 0], d[:, 1]), float)

    @cached_property
    def triangle_diameters(self) -> np.ndarray:
        return _frozen(self.edge_lengths[self.triangle_edges].max(axis=1), float)

    @property
    def h(self) -> float:
        return float(self.triangle_diameters.max())

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """Constant gradients of the three hat functions on each triangle, shape (M, 3, 2)."""
        p = self.vertices[self.triangles]
        area2 = 2.0 * self.signed_areas
        # grad lambda_i = rot90(p_{i+2} - p_{i+1}) / (2|T|)
        e = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
        g = np.stack([-e[:, :, 1], e[:, :, 0]], axis=2) / area2[:, None, None]
        return _frozen(g, float)

    def is_conforming(self) -> bool:
        """Every interior edge has two incident triangles and every boundary edge one,
        and no vertex lies in the interior of an edge."""
        if np.any(self.signed_areas <= 0):
            return False
        # boundary edges of a polygon form closed loops
        be = self.edges[self.boundary_edge]
        deg = np.bincount(be.ravel(), minlength=self.n_vertices)
        if np.any(deg[self.boundary_vertex] != 2):
            return False
        return _no_hanging_nodes(self)

    def min_angles(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(angles, axis=0)


def _no_hanging_nodes(mesh):
    # a hanging node is a mesh vertex lying inside an edge that only one triangle sees
    be = mesh.edges[mesh.boundary_edge]
    a = mesh.vertices[be[:, 0]]
    ab = mesh.vertices[be[:, 1]] - a
    ll = np.einsum("ij,ij->i", ab, ab)
    for x in mesh.vertices[mesh.boundary_vertex]:
        d = x - a
        s = np.einsum("ij,ij->i", d, ab) / ll
        cross = ab[:, 0] * d[:, 1] - ab[:, 1] * d[:, 0]
        if np.any((s > 1e-12) & (s < 1 - 1e-12) & (np.abs(cross) <= 1e-12 * ll)):
            return False
    return True


def _orient_longest_edge_first(vertices, triangles):
    """Make triangles counter-clockwise and rotate the longest edge into slot (0, 1)."""
    t = np.array(triangles, dtype=np.int64)
    p = vertices[t]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    t[cw] = t[cw][:, [0, 2, 1]]
    p = vertices[t]
    lengths = np.stack([np.linalg.norm(p[:, j] - p[:, i], axis=1) for i, j in _LOCAL_EDGES], axis=1)
    k = np.argmax(lengths, axis=1)
    rows = np.arange(len(t))[:, None]
    return t[rows, (np.arange(3)[None, :] + k[:, None]) % 3]


def build_initial(kind="paper4", n=1) -> Mesh:
    """Initial mesh of the unit square.

    Parameters
    ----------
    kind : {"paper4", "uniform"} or str
        ``"paper4"``: four triangles meeting at the centre (5 vertices).
        ``"uniform"``: an ``n x n`` grid of squares, each cut along the
        diagonal from lower-left to upper-right. A string ``"uniform:8"``
        is accepted as shorthand for ``kind="uniform", n=8``.
    """
    if isinstance(kind, str) and kind.startswith("uniform:"):
        kind, n = "uniform", int(kind.split(":", 1)[1])
    if kind == "paper4":
        vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
        triangles = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    elif kind == "uniform":
        if n < 1:
            raise DomainError(f"uniform mesh needs n >= 1, got {n}")
        x = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(x, x)
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(n), np.arange(n))
        v00 = (j * (n + 1) + i).ravel()
        v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
        triangles = np.vstack([np.column_stack([v00, v10, v11]),
                               np.column_stack([v00, v11, v01])])
        # keep the two halves of a square adjacent in memory
        triangles = triangles.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    else:
        raise DomainError(f"unknown initial mesh kind {kind!r}")
    return Mesh(vertices, _orient_longest_edge_first(vertices, triangles))


@dataclass(frozen=True, eq=False)
class NodalFunction:
    """Continuous piecewise linear function given by its vertex values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise StructureError(
                f"expected {self.mesh.n_vertices} vertex values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def from_interior(cls, mesh, coefficients):
        """Extend interior coefficients by zero boundary values."""
        v = np.zeros(mesh.n_vertices)
        v[mesh.interior_vertices] = coefficients
        return cls(mesh, v)

    @classmethod
    def interpolate(cls, mesh, g):
        """Nodal interpolant of ``g(points) -> values``."""
        return cls(mesh, np.asarray(g(mesh.vertices), dtype=float))

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.mesh.interior_vertices]

    def in_v0h(self) -> bool:
        """True when the function vanishes on the boundary."""
        return bool(np.all(self.values[self.mesh.boundary_vertex] == 0.0))

    def gradients(self) -> np.ndarray:
        """Per-triangle constant gradient, shape (M, 2)."""
        return np.einsum("mi,mij->mj", self.values[self.mesh.triangles],
                         self.mesh.barycentric_gradients)

    def __add__(self, other):
        return NodalFunction(self.mesh, self.values + _values_on(self.mesh, other))

    def __sub__(self, other):
        return NodalFunction(self.mesh, self.values - _values_on(self.mesh, other))

    def __mul__(self, s):
        return NodalFunction(self.mesh, self.values * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return NodalFunction(self.mesh, -self.values)


def _values_on(mesh, other):
    if isinstance(other, NodalFunction):
        if other.mesh is not mesh:
            raise StructureError("functions live on different meshes")
        return other.values
    return np.asarray(other, dtype=float)


def diameters(mesh: Mesh):
    """Element diameters ``h_T`` and interior edge lengths ``h_E``."""
    return mesh.triangle_diameters.copy(), mesh.edge_lengths[mesh.interior_edges].copy()


@dataclass(frozen=True, eq=False)
class PecletWeights:
    """Cut-off weights ``min(1, h / sqrt(eps))`` per triangle and per interior edge."""

    alpha_T: np.ndarray
    alpha_E: np.ndarray


def peclet_weights(mesh: Mesh, eps: float) -> PecletWeights:
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    h_T, h_E = diameters(mesh)
    s = 1.0 / np.sqrt(eps)
    return PecletWeights(np.minimum(1.0, s * h_T), np.minimum(1.0, s * h_E))


def refine(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    Each marked triangle is bisected once across its refinement edge.
    Triangles that receive a midpoint on any edge are bisected as well,
    recursively, until the mesh is conforming again.

    Returns the input mesh unchanged when nothing is marked.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise StructureError("marked triangle index out of range")

    te = mesh.triangle_edges
    edge_marked = np.zeros(len(mesh.edges), dtype=bool)
    edge_marked[te[marked, 0]] = True
    while True:
        em = edge_marked[te]
        need = (em[:, 1] | em[:, 2]) & ~em[:, 0]
        if not need.any():
            break
        edge_marked[te[need, 0]] = True

    n_old = mesh.n_vertices
    split = np.flatnonzero(edge_marked)
    midpoint = np.full(len(mesh.edges), -1, dtype=np.int64)
    midpoint[split] = n_old + np.arange(len(split))
    new_edges = mesh.edges[split]
    vertices = np.vstack([mesh.vertices, mesh.vertices[new_edges].mean(axis=1)])

    t = mesh.triangles
    v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
    m0, m1, m2 = (midpoint[te[:, k]] for k in range(3))
    has0, has1, has2 = m0 >= 0, m1 >= 0, m2 >= 0
    M = mesh.n_triangles

    # up to four children per triangle; children[slot] and a mask of used slots
    children = np.zeros((M, 4, 3), dtype=np.int64)
    used = np.zeros((M, 4), dtype=bool)
    gen_add = np.zeros((M, 4), dtype=np.int64)

    keep = ~has0
    children[keep, 0] = t[keep]
    used[keep, 0] = True

    # first child [v1, v2, m0], possibly split again on (v1, v2)
    a = has0 & ~has1
    children[a, 0] = np.column_stack([v1, v2, m0])[a]
    used[a, 0] = True
    gen_add[a, 0] = 1
    a = has0 & has1
    children[a, 0] = np.column_stack([v2, m0, m1])[a]
    children[a, 1] = np.column_stack([m0, v1, m1])[a]
    used[a, :2] = True
    gen_add[a, :2] = 2

    # second child [v2, v0, m0], possibly split again on (v2, v0)
    b = has0 & ~has2
    children[b, 2] = np.column_stack([v2, v0, m0])[b]
    used[b, 2] = True
    gen_add[b, 2] = 1
    b = has0 & has2
    children[b, 2] = np.column_stack([v0, m0, m2])[b]
    children[b, 3] = np.column_stack([m0, v2, m2])[b]
    used[b, 2:] = True
    gen_add[b, 2:] = 2

    parent_triangle = np.repeat(np.arange(M), 4).reshape(M, 4)[used]
    generation = (mesh.generation[:, None] + gen_add)[used]
    return Mesh(vertices, children[used], generation=generation, parent=mesh,
                parent_triangle=parent_triangle, new_vertex_edges=new_edges)


def refine_uniform(mesh: Mesh, rounds=1) -> Mesh:
    for _ in range(rounds):
        mesh = refine(mesh, np.arange(mesh.n_triangles))
    return mesh


def prolongate(u_coarse, fine: Mesh):
    """Interpolate a P1 function onto a mesh obtained from its own by :func:`refine`.

    Old vertices keep their values, each bisection midpoint gets the mean
    of its edge endpoints, and boundary values are set to zero.
    """
    coarse = u_coarse.mesh
    if fine is coarse:
        return NodalFunction(fine, u_coarse.values.copy())
    if fine.parent is not coarse:
        raise StructureError("target mesh was not refined from the function's mesh")
    values = np.empty(fine.n_vertices)
    values[:coarse.n_vertices] = u_coarse.values
    values[coarse.n_vertices:] = u_coarse.values[fine.new_vertex_edges].mean(axis=1)
    values[fine.boundary_vertex] = 0.0
    return NodalFunction(fine, values)


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text export: ``vertices N triangles M`` header, then ``x y flag`` rows,
    then ``i j k`` rows (0-based)."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}\n")
        for (x, y), b in zip(mesh.vertices, mesh.boundary_vertex):
            fh.write(f"{float(x)!r} {float(y)!r} {int(b)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def read_mesh(path) -> Mesh:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "vertices" or head[2] != "triangles":
        raise StructureError(f"bad mesh header: {lines[0]!r}")
    n, m = int(head[1]), int(head[3])
    verts = np.array([[float(s) for s in ln.split()[:2]] for ln in lines[1:1 + n]]).reshape(n, 2)
    tris = np.array([[int(s) for s in ln.split()] for ln in lines[1 + n:1 + n + m]]).reshape(m, 3)
    return Mesh(verts, tris)


def write_vtk(mesh: Mesh, path, point_data=None) -> None:
    """Legacy ASCII VTK unstructured grid, optionally with named point data."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# vtk DataFile Version 3.0\nfpgalerkin mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        fh.write(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"CELL_TYPES {mesh.n_triangles}\n")
        fh.write("5\n" * mesh.n_triangles)
        if point_data:
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, values in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in values:
                    fh.write(f"{float(v)!r}\n")
