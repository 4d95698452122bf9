"""Structured triangulations of the unit square for P1 finite elements.

The mesh is the deterministic criss-free triangulation of Omega = (0,1)^2:
``n`` subdivisions per side, every cell split along the lower-left to
upper-right diagonal.  Homogeneous Dirichlet data is eliminated, so the
unknown vector lives on the interior vertices only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Mesh", "build_structured_mesh", "nodal_interpolate", "export_mesh_csv"]


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the unit square with interior-DOF bookkeeping.

    Attributes
    ----------
    n : int
        Subdivisions per side (h = 1/n).
    vertices : ndarray, shape (nv, 2)
        Vertex coordinates, row-major grid order (index = iy*(n+1) + ix).
    triangles : ndarray, shape (nt, 3)
        Vertex-index triples, counterclockwise orientation.
    boundary_mask : ndarray of bool, shape (nv,)
        True on vertices with x in {0,1} or y in {0,1}.
    dof_of_vertex : ndarray of int, shape (nv,)
        Interior DOF index per vertex, -1 on the boundary.
    vertex_of_dof : ndarray of int, shape (m,)
        Inverse map, m = (n-1)^2.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray
    dof_of_vertex: np.ndarray
    vertex_of_dof: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_dofs(self) -> int:
        return self.vertex_of_dof.shape[0]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_structured_mesh(n: int) -> Mesh:
    """Build the structured triangulation with ``n`` subdivisions per side.

    Every unit cell is split into two right triangles along the same
    (lower-left to upper-right) diagonal; output depends only on ``n``.

    Raises
    ------
    ValueError
        If ``n < 2`` (the mesh would have no interior DOFs).
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"need n >= 2 subdivisions per side, got {n}")

    side = np.arange(n + 1, dtype=np.float64) / n
    xs, ys = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([xs.ravel(), ys.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    t = 0
    for iy in range(n):
        for ix in range(n):
            v00 = vid(ix, iy)
            v10 = vid(ix + 1, iy)
            v01 = vid(ix, iy + 1)
            v11 = vid(ix + 1, iy + 1)
            tris[t] = (v00, v10, v11)
            tris[t + 1] = (v00, v11, v01)
            t += 2

    ix_grid = np.tile(np.arange(n + 1), n + 1)
    iy_grid = np.repeat(np.arange(n + 1), n + 1)
    boundary = (ix_grid == 0) | (ix_grid == n) | (iy_grid == 0) | (iy_grid == n)

    dof_of_vertex = np.full(vertices.shape[0], -1, dtype=np.int64)
    interior = np.flatnonzero(~boundary)
    dof_of_vertex[interior] = np.arange(interior.size)

    return Mesh(
        n=n,
        vertices=_freeze(vertices),
        triangles=_freeze(tris),
        boundary_mask=_freeze(boundary),
        dof_of_vertex=_freeze(dof_of_vertex),
        vertex_of_dof=_freeze(interior),
    )


def nodal_interpolate(mesh: Mesh, f):
    """Interpolate a scalar function at the interior vertices.

    Returns a one-component :class:`~peakdescent.fields.Field` whose DOF
    values are ``f(x, y)`` at the interior vertices; boundary values are
    implicitly zero.

    Raises
    ------
    ValueError
        If ``f`` evaluates to a non-finite value at an interior vertex.
    """
    from .fields import Field

    pts = mesh.vertices[mesh.vertex_of_dof]
    try:
        values = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=np.float64)
        if values.shape != (mesh.num_dofs,):
            raise TypeError
    except TypeError:
        values = np.array(
            [f(float(x), float(y)) for x, y in pts], dtype=np.float64
        )
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        x, y = pts[bad]
        raise ValueError(f"non-finite seed value at vertex ({x}, {y})")
    return Field(mesh, values[np.newaxis, :])


def export_mesh_csv(mesh: Mesh, path) -> None:
    """Write the debug mesh export.

    Format: one vertex per row ``index,x,y,is_boundary`` followed by one
    triangle per row ``v0,v1,v2``; the two sections are introduced by
    header lines.
    """
    lines = ["index,x,y,is_boundary"]
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{i},{float(x)!r},{float(y)!r},{int(mesh.boundary_mask[i])}")
    lines.append("v0,v1,v2")
    for v0, v1, v2 in mesh.triangles:
        lines.append(f"{v0},{v1},{v2}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
