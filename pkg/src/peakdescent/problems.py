"""Concrete energy functionals and weak gradients for the two applications.

``IndefiniteProblem`` is the single scalar equation whose linear part
``-Laplace + V`` may have negative spectrum (V constant in the shipped
configuration); ``SystemProblem`` is the k-component cubic coupling system.
Both precompute their operators and quadrature tables at construction and
are immutable afterwards; evaluation calls are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .cones import (DELTA_A, INNER_TOL, IndefiniteCone, SystemCone,
                    _abs_pow_pm2)
from .errors import NumericFailure
from .fem import (MeshQuadrature, SparseOperator, assemble_stiffness,
                  assemble_weighted_mass)
from .fields import Field
from .mesh import Mesh
from .spectral import GAP_TOL, SpectralBasis, negative_eigenspace_from_ops

__all__ = [
    "IndefiniteProblem",
    "SystemProblem",
    "field_max",
    "symmetry_report",
    "SymmetryReport",
    "SYMMETRY_NAMES",
]


class _ProblemBase:
    """Shared metric and gradient plumbing (H = product of H^1_0 factors)."""

    mesh: Mesh
    stiffness: SparseOperator
    quad: MeshQuadrature

    def h_inner(self, u: Field, v: Field) -> float:
        av = (self.stiffness.matrix @ v.data.T).T
        return float(np.einsum("ij,ij->", u.data, av))

    def h_norm(self, u: Field) -> float:
        return float(np.sqrt(max(self.h_inner(u, u), 0.0)))

    def riesz_gradient(self, u: Field):
        """H-representer of the energy derivative and its H-norm.

        Solves one stiffness system per component; the squared norm is the
        duality pairing of the residual with the representer.
        """
        residual = self.weak_gradient(u)
        g = np.vstack([self.stiffness.solve(r) for r in residual])
        norm2 = float(np.einsum("ij,ij->", residual, g))
        return Field(self.mesh, g), float(np.sqrt(max(norm2, 0.0)))

    def _check_finite(self, value: float, what: str) -> float:
        if not np.isfinite(value):
            raise NumericFailure(f"numeric-overflow: {what} is non-finite")
        return float(value)


class IndefiniteProblem(_ProblemBase):
    """Energy u -> 1/2 int (|grad u|^2 + V u^2) - 1/p int |u|^p on H^1_0.

    Construction assembles the stiffness A, the weighted mass B_V, the mass
    M, and the negative eigenspace of the operator pencil; it fails with
    ``SpectralGapViolation`` when an eigenvalue sits within tolerance of 0.

    Parameters
    ----------
    V : float or callable
        Potential (constant in the supported configuration).
    p : float
        Superlinear exponent, p > 2.
    """

    kind = "indefinite"
    k = 1

    def __init__(self, mesh: Mesh, V, p: float = 4.0, gap_tol: float = GAP_TOL,
                 basis: SpectralBasis | None = None):
        p = float(p)
        if not p > 2.0:
            raise ValueError(f"exponent p must exceed 2, got {p}")
        self.mesh = mesh
        self.V = V
        self.p = p
        self.stiffness = assemble_stiffness(mesh)
        self.mass = assemble_weighted_mass(mesh, 1.0)
        self.weighted_mass = assemble_weighted_mass(mesh, V)
        self.K = self.stiffness + self.weighted_mass
        self.quad = MeshQuadrature(mesh)
        if basis is None:
            basis = negative_eigenspace_from_ops(
                mesh, self.stiffness, self.weighted_mass, self.mass,
                gap_tol=gap_tol,
            )
        self.basis = basis

    def energy(self, u: Field) -> float:
        uvec = u.data[0]
        quadratic = 0.5 * float(uvec @ (self.K.matrix @ uvec))
        s = self.quad.values(uvec)
        with np.errstate(over="ignore", invalid="ignore"):
            nonlinear = self.quad.integrate(_abs_pow_pm2(s, self.p) * s * s) / self.p
        return self._check_finite(quadratic - nonlinear, "energy")

    def weak_gradient(self, u: Field) -> np.ndarray:
        """Weak residual (dual vector): K u - int |u|^{p-2} u phi_j."""
        uvec = u.data[0]
        s = self.quad.values(uvec)
        with np.errstate(over="ignore", invalid="ignore"):
            nl = self.quad.load(_abs_pow_pm2(s, self.p) * s)
        if not np.all(np.isfinite(nl)):
            raise NumericFailure("numeric-overflow: weak gradient is non-finite")
        return (self.K.matrix @ uvec - nl)[np.newaxis, :]

    def cone(self, delta_a: float = DELTA_A,
             inner_tol: float = INNER_TOL) -> IndefiniteCone:
        return IndefiniteCone(self.basis.vectors, self.stiffness,
                              delta_a=delta_a, inner_tol=inner_tol)


class SystemProblem(_ProblemBase):
    """Energy u -> 1/2 int |grad u|^2 - int F(u) for the cubic coupling system.

    ``F(u) = 1/4 sum_i mu_i u_i^4 + 1/2 sum_{i<j} beta_ij u_i^2 u_j^2``.
    ``admissible_range`` records whether every coupling lies inside
    ``[-sqrt(mu_i mu_j), 0]``; values outside are accepted but flagged
    (they can make a component collapse during the outer iteration).
    """

    kind = "system"

    def __init__(self, mesh: Mesh, mu, beta, _shared=None):
        mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        beta = np.asarray(beta, dtype=np.float64)
        k = mu.size
        if beta.shape != (k, k):
            raise ValueError(f"beta must be {k}x{k}, got {beta.shape}")
        if np.any(mu <= 0.0):
            raise ValueError("all mu_i must be positive")
        if not np.array_equal(beta, beta.T):
            raise ValueError("beta must be symmetric")
        if np.any(np.diagonal(beta) != 0.0):
            raise ValueError("beta must have zero diagonal")
        self.mesh = mesh
        self.mu = mu
        self.beta = beta
        self.k = int(k)
        limits = np.sqrt(np.outer(mu, mu))
        off = ~np.eye(k, dtype=bool)
        self.admissible_range = bool(
            np.all(beta[off] <= 0.0) and np.all(beta[off] >= -limits[off])
        )
        if _shared is not None:
            self.stiffness, self.quad = _shared
        else:
            self.stiffness = assemble_stiffness(mesh)
            self.quad = MeshQuadrature(mesh)

    def restrict(self, active) -> "SystemProblem":
        """Subsystem on the given component indices (operators shared)."""
        active = list(active)
        return SystemProblem(
            self.mesh,
            self.mu[active],
            self.beta[np.ix_(active, active)],
            _shared=(self.stiffness, self.quad),
        )

    def _density_F(self, s: np.ndarray) -> np.ndarray:
        s2 = s * s
        quartic = 0.25 * (self.mu @ (s2 * s2))
        coupling = 0.25 * np.einsum("iq,ij,jq->q", s2, self.beta, s2)
        return quartic + coupling

    def energy(self, u: Field) -> float:
        au = (self.stiffness.matrix @ u.data.T).T
        quadratic = 0.5 * float(np.einsum("ij,ij->", u.data, au))
        s = self.quad.values(u.data)
        with np.errstate(over="ignore", invalid="ignore"):
            nonlinear = self.quad.integrate(self._density_F(np.atleast_2d(s)))
        return self._check_finite(quadratic - nonlinear, "energy")

    def weak_gradient(self, u: Field) -> np.ndarray:
        """Rows A u_i - int dF_i(u) phi_j with dF_i = mu_i u_i^3 + u_i sum beta_ij u_j^2."""
        s = np.atleast_2d(self.quad.values(u.data))
        with np.errstate(over="ignore", invalid="ignore"):
            s2 = s * s
            df = s * (self.mu[:, None] * s2 + self.beta @ s2)
        if not np.all(np.isfinite(df)):
            raise NumericFailure("numeric-overflow: weak gradient is non-finite")
        loads = np.vstack([self.quad.load(df[i]) for i in range(self.k)])
        return (self.stiffness.matrix @ u.data.T).T - loads

    def cone(self, delta_a: float = DELTA_A,
             inner_tol: float = INNER_TOL) -> SystemCone:
        return SystemCone(self.k, self.stiffness, delta_a=delta_a,
                          inner_tol=inner_tol)


def field_max(u: Field) -> np.ndarray:
    """Componentwise maximum nodal value, boundary zeros included."""
    return np.maximum(u.data.max(axis=1, initial=0.0), 0.0)


SYMMETRY_NAMES = ("identity", "rot90", "rot180", "rot270",
                  "mirror_x", "mirror_y", "diag_main", "diag_anti")


def _vertex_permutations(mesh: Mesh) -> dict:
    """Vertex-index maps of the 8 dihedral symmetries of the square."""
    n = mesh.n
    ix = np.tile(np.arange(n + 1), n + 1)
    iy = np.repeat(np.arange(n + 1), n + 1)
    images = {
        "identity": (ix, iy),
        "rot90": (iy, n - ix),
        "rot180": (n - ix, n - iy),
        "rot270": (n - iy, ix),
        "mirror_x": (n - ix, iy),
        "mirror_y": (ix, n - iy),
        "diag_main": (iy, ix),
        "diag_anti": (n - iy, n - ix),
    }
    return {name: ay * (n + 1) + ax for name, (ax, ay) in images.items()}


def _vertex_adjacency(mesh: Mesh) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    cols = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    nv = mesh.num_vertices
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(nv, nv))
    return (adj + adj.T).tocsr()


def count_nodal_domains(u: Field, rel_tol: float = 1e-8) -> int:
    """Connected sign components over the vertex adjacency graph.

    Vertices with |value| below ``rel_tol * max|value|`` are treated as
    zero and merged into their neighbors (they never form a domain).
    """
    values = u.vertex_values()[0]
    scale = np.abs(values).max()
    if scale == 0.0:
        return 0
    adj = _vertex_adjacency(u.mesh)
    count = 0
    for sign in (1.0, -1.0):
        idx = np.flatnonzero(sign * values > rel_tol * scale)
        if idx.size:
            count += connected_components(adj[np.ix_(idx, idx)],
                                          directed=False)[0]
    return int(count)


@dataclass(frozen=True)
class SymmetryReport:
    """Relative H-norm defects per square symmetry plus nodal-domain count.

    ``defects[name]`` is ``|u - u o sigma|_H / |u|_H`` and
    ``odd_defects[name]`` is ``|u + u o sigma|_H / |u|_H`` (the composition
    of the symmetry with a sign flip).
    """

    defects: dict
    odd_defects: dict
    nodal_domains: int

    def max_defect(self) -> float:
        return max(self.defects.values())


def symmetry_report(u: Field, stiffness: SparseOperator | None = None) -> SymmetryReport:
    """Symmetry and nodal diagnostics of a scalar field on the unit square.

    The composed fields are nodal interpolants (the vertex grid is mapped
    onto itself by every dihedral symmetry, so composition is a vertex
    permutation).
    """
    if u.k != 1:
        raise ValueError("symmetry report requires a scalar field")
    mesh = u.mesh
    if stiffness is None:
        stiffness = assemble_stiffness(mesh)
    A = stiffness.matrix
    uvec = u.data[0]
    base = float(uvec @ (A @ uvec))
    if base <= 0.0:
        raise ValueError("symmetry report of a zero field")
    norm = np.sqrt(base)
    vertex_vals = u.vertex_values()[0]
    perms = _vertex_permutations(mesh)

    defects, odd_defects = {}, {}
    for name, perm in perms.items():
        composed = vertex_vals[perm][mesh.vertex_of_dof]
        diff = uvec - composed
        summ = uvec + composed
        defects[name] = float(np.sqrt(max(diff @ (A @ diff), 0.0))) / norm
        odd_defects[name] = float(np.sqrt(max(summ @ (A @ summ), 0.0))) / norm

    return SymmetryReport(defects=defects, odd_defects=odd_defects,
                          nodal_domains=count_nodal_domains(u))
