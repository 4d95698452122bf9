"""P1 operators, triangle quadrature, SPD solves, and Sobolev gradients.

Assembly is vectorized over triangles but accumulates in triangle-index
order, so repeated builds are bitwise identical.  The quadrature rule is
exact for polynomials of degree <= 4 per triangle, which makes the quartic
nonlinearity of a P1 function integrate exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericFailure
from .fields import Field
from .mesh import Mesh

__all__ = [
    "SparseOperator",
    "MeshQuadrature",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "integrate_nonlinearity",
    "solve_spd",
    "riesz_gradient",
    "export_field_csv",
    "read_field_csv",
]

# 6-point triangle rule, exact for polynomials of total degree <= 4.
_QA1 = 0.09157621350977074
_QA2 = 0.44594849091596489
_QW1 = 0.10995174365532187
_QW2 = 0.22338158967801147

TRI_QUAD_BARY = np.array(
    [
        [1.0 - 2.0 * _QA1, _QA1, _QA1],
        [_QA1, 1.0 - 2.0 * _QA1, _QA1],
        [_QA1, _QA1, 1.0 - 2.0 * _QA1],
        [1.0 - 2.0 * _QA2, _QA2, _QA2],
        [_QA2, 1.0 - 2.0 * _QA2, _QA2],
        [_QA2, _QA2, 1.0 - 2.0 * _QA2],
    ]
)
TRI_QUAD_W = np.array([_QW1, _QW1, _QW1, _QW2, _QW2, _QW2])


class SparseOperator:
    """Symmetric sparse matrix on the interior DOFs (CSR storage).

    The stiffness instance is positive definite; a direct factorization is
    cached lazily for repeated solves.
    """

    def __init__(self, matrix, symmetric: bool = True):
        matrix = sp.csr_matrix(matrix)
        matrix.sort_indices()
        self.matrix = matrix
        self.symmetric = symmetric
        self._factor = None

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator(self.matrix + other.matrix,
                              self.symmetric and other.symmetric)

    def scaled(self, s: float) -> "SparseOperator":
        return SparseOperator(self.matrix * float(s), self.symmetric)

    def _factorized(self):
        if self._factor is None:
            diag = self.matrix.diagonal()
            if diag.size and diag.min() <= 0.0:
                raise NumericFailure(
                    "matrix is not positive definite "
                    f"(min diagonal {diag.min()!r})"
                )
            try:
                self._factor = spla.splu(sp.csc_matrix(self.matrix))
            except RuntimeError as exc:  # singular factorization
                raise NumericFailure(f"sparse factorization failed: {exc}") from exc
        return self._factor

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if not np.any(rhs):
            return np.zeros_like(rhs, dtype=np.float64)
        return self._factorized().solve(np.asarray(rhs, dtype=np.float64))


def _triangle_geometry(mesh: Mesh):
    """Vertex coordinates, edge vectors, and signed areas per triangle."""
    pts = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area


def _accumulate(mesh: Mesh, local: np.ndarray, interior_only: bool) -> SparseOperator:
    """Sum per-triangle 3x3 blocks into a mirrored-symmetric CSR matrix.

    Only the upper triangle (by global index) is accumulated; the lower
    triangle is an exact mirror, so symmetric entries are bitwise equal.
    """
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    vals = local.reshape(-1)  # row-major per triangle, matches rows/cols

    if interior_only:
        rows = mesh.dof_of_vertex[rows]
        cols = mesh.dof_of_vertex[cols]
        keep = (rows >= 0) & (cols >= 0)
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        size = mesh.num_dofs
    else:
        size = mesh.num_vertices

    upper = rows <= cols
    m = sp.coo_matrix(
        (vals[upper], (rows[upper], cols[upper])), shape=(size, size)
    ).tocsr()
    m.sum_duplicates()
    full = m + sp.triu(m, k=1).T
    return SparseOperator(full.tocsr())


def assemble_stiffness(mesh: Mesh, interior_only: bool = True) -> SparseOperator:
    """Assemble the exact P1 stiffness matrix of the H inner product.

    On the structured mesh the interior stencil is the 5-point Laplacian
    (diagonal 4, four neighbors -1; scale-free in 2D).

    Parameters
    ----------
    mesh : Mesh
    interior_only : bool
        If True (default) restrict to interior DOFs (Dirichlet elimination);
        otherwise assemble over all vertices (diagnostics).
    """
    pts, area = _triangle_geometry(mesh)
    # gradient of barycentric i: (b_i, c_i) / (2 area), cyclic differences
    b = pts[:, [1, 2, 0], 1] - pts[:, [2, 0, 1], 1]
    c = pts[:, [2, 0, 1], 0] - pts[:, [1, 2, 0], 0]
    scale = 1.0 / (4.0 * area)
    local = (np.einsum("ti,tj->tij", b, b) + np.einsum("ti,tj->tij", c, c))
    local *= scale[:, None, None]
    return _accumulate(mesh, local, interior_only)


def assemble_weighted_mass(mesh: Mesh, V, interior_only: bool = True) -> SparseOperator:
    """Assemble the matrix of (u, v) -> integral of V(x) u v.

    Uses the degree-4 quadrature rule per triangle; for constant V the
    result equals V times the exact P1 mass matrix.

    Parameters
    ----------
    V : float or callable(x, y) -> float
        Weight; evaluated at the quadrature points when callable.

    Raises
    ------
    ValueError
        If V is non-finite at a quadrature point.
    """
    pts, area = _triangle_geometry(mesh)
    if callable(V):
        qp = np.einsum("qi,tid->tqd", TRI_QUAD_BARY, pts)  # (nt, 6, 2)
        vq = np.asarray(V(qp[..., 0], qp[..., 1]), dtype=np.float64)
        vq = np.broadcast_to(vq, qp.shape[:2])
    else:
        vq = np.full((mesh.num_triangles, TRI_QUAD_W.size), float(V))
    if not np.all(np.isfinite(vq)):
        raise ValueError("weight V is non-finite at a quadrature point")

    coeff = vq * TRI_QUAD_W * area[:, None]  # (nt, 6)
    local = np.einsum("tq,qi,qj->tij", coeff, TRI_QUAD_BARY, TRI_QUAD_BARY)
    return _accumulate(mesh, local, interior_only)


class MeshQuadrature:
    """Per-mesh quadrature tables for nonlinear terms.

    Holds the global quadrature weights, the point coordinates, and the
    sparse interpolation matrix mapping interior-DOF coefficients to values
    at the quadrature points (boundary values are zero).
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        pts, area = _triangle_geometry(mesh)
        nt, nq = mesh.num_triangles, TRI_QUAD_W.size
        self.weights = (TRI_QUAD_W[None, :] * area[:, None]).ravel()
        self.points = np.einsum("qi,tid->tqd", TRI_QUAD_BARY, pts).reshape(-1, 2)

        rows = np.repeat(np.arange(nt * nq), 3)
        cols = mesh.dof_of_vertex[
            np.repeat(mesh.triangles, nq, axis=0).reshape(nt * nq, 3).ravel()
        ]
        vals = np.tile(TRI_QUAD_BARY, (nt, 1)).ravel()
        keep = cols >= 0
        self.interp = sp.csr_matrix(
            (vals[keep], (rows[keep], cols[keep])),
            shape=(nt * nq, mesh.num_dofs),
        )
        self.interp.sort_indices()

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        """Values at quadrature points; accepts (m,) or (k, m)."""
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.ndim == 1:
            return self.interp @ coeffs
        return (self.interp @ coeffs.T).T

    def integrate(self, values_q: np.ndarray) -> float:
        return float(self.weights @ values_q)

    def load(self, values_q: np.ndarray) -> np.ndarray:
        """Weak load vector of a pointwise density: integral of f(u) phi_j."""
        return self.interp.T @ (self.weights * values_q)


def integrate_nonlinearity(mesh: Mesh, u: Field, integrand) -> float:
    """Integrate ``integrand`` composed with the P1 interpolant of ``u``.

    ``integrand`` receives one array of quadrature-point values per
    component of ``u`` and must return an array of the same length.

    Raises
    ------
    NumericFailure
        If the integrand overflows to a non-finite value.
    """
    quad = MeshQuadrature(mesh)
    svals = np.atleast_2d(quad.values(u.data))
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(integrand(*svals), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericFailure("numeric-overflow: integrand is non-finite")
    return quad.integrate(out)


def solve_spd(op: SparseOperator, rhs: np.ndarray) -> np.ndarray:
    """Solve op x = rhs for an SPD operator, relative residual <= 1e-12.

    Raises
    ------
    NumericFailure
        On factorization breakdown or when the residual check fails
        (both symptoms of a non-SPD input).
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    x = op.solve(rhs)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0.0:
        res = np.linalg.norm(op.apply(x) - rhs) / rhs_norm
        if not res <= 1e-12:
            raise NumericFailure(
                f"SPD solve residual {res!r} exceeds 1e-12 "
                "(operator may be indefinite)"
            )
    return x


def riesz_gradient(stiffness: SparseOperator, residual: np.ndarray,
                   mesh: Mesh) -> Field:
    """Convert weak residuals (dual vectors) into the H-gradient field.

    Solves ``stiffness @ g_i = residual_i`` per component, so that
    ``(g | phi)_H`` equals the weak derivative applied to ``phi``.
    """
    residual = np.atleast_2d(np.asarray(residual, dtype=np.float64))
    g = np.vstack([solve_spd(stiffness, r) for r in residual])
    return Field(mesh, g)


def export_field_csv(field: Field, path) -> None:
    """Write ``x,y,u1[,u2,...]`` rows over all vertices in index order."""
    vv = field.vertex_values()
    header = "x,y," + ",".join(f"u{i + 1}" for i in range(field.k))
    lines = [header]
    for i, (x, y) in enumerate(field.mesh.vertices):
        vals = ",".join(repr(float(v)) for v in vv[:, i])
        lines.append(f"{float(x)!r},{float(y)!r},{vals}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(mesh: Mesh, path) -> Field:
    """Read a field written by :func:`export_field_csv` back onto ``mesh``."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[0] != mesh.num_vertices or raw.shape[1] < 3:
        raise ValueError(
            f"field file has shape {raw.shape}, expected "
            f"({mesh.num_vertices}, >=3)"
        )
    if not np.allclose(raw[:, :2], mesh.vertices, atol=1e-12, rtol=0.0):
        raise ValueError("vertex coordinates in file do not match the mesh")
    return Field(mesh, raw[mesh.vertex_of_dof, 2:].T)
