"""Lowest eigenpairs of -Laplace + V and the negative eigenspace.

The subspace spanned by the eigenfunctions with negative eigenvalues splits
H into the negative and positive spectral parts; the solver's cones are
built on top of it.  Eigenvectors are orthonormalized in the H (stiffness)
inner product so the cone projectors are H-orthogonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericFailure, SpectralGapViolation
from .fem import SparseOperator, assemble_stiffness, assemble_weighted_mass
from .fields import Field
from .mesh import Mesh

__all__ = ["SpectralBasis", "lowest_eigenpairs", "negative_eigenspace",
           "negative_eigenspace_from_ops", "export_eigs_csv",
           "DENSE_EIGEN_CUTOFF", "GAP_TOL"]

# dense generalized eigensolve below this many DOFs, shift-invert above
DENSE_EIGEN_CUTOFF = 4000
GAP_TOL = 1e-6
_RESIDUAL_TOL = 1e-8
_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SpectralBasis:
    """H-orthonormal basis of the negative eigenspace.

    Attributes
    ----------
    eigenvalues : ndarray
        Negative eigenvalues, ascending.
    vectors : ndarray, shape (m, dim)
        Basis columns, H-orthonormal (v_i^T A v_j = delta_ij).
    residuals : ndarray
        Relative eigen-residual per pair.
    computed_eigenvalues, computed_residuals : ndarray
        Every eigenvalue obtained while locating the negative part
        (includes the first positive ones); used for reporting.
    """

    mesh: Mesh
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    computed_eigenvalues: np.ndarray
    computed_residuals: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)

    def fields(self):
        return [Field(self.mesh, self.vectors[:, i]) for i in range(self.dim)]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Deterministic sign: first coordinate of meaningful size positive."""
    out = vectors.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0.0:
            out[:, i] = -col
    return out


def lowest_eigenpairs(A: SparseOperator, B_V: SparseOperator, M: SparseOperator,
                      count: int, dense_cutoff: int | None = None):
    """Algebraically smallest eigenpairs of (A + B_V) x = lambda M x.

    Deterministic up to eigenvector sign, which is fixed so that the first
    nonzero coordinate is positive.  Residuals are checked to 1e-8 relative.

    Returns
    -------
    (eigenvalues, eigenvectors, residuals)
        Ascending eigenvalues (count,), columns (m, count), and relative
        residual norms per pair.
    """
    m = A.shape[0]
    count = int(count)
    if not 1 <= count <= m:
        raise ValueError(f"count must be in [1, {m}], got {count}")
    cutoff = DENSE_EIGEN_CUTOFF if dense_cutoff is None else dense_cutoff
    K = A.matrix + B_V.matrix

    if m <= cutoff:
        w, v = sla.eigh(K.toarray(), M.toarray(),
                        subset_by_index=(0, count - 1))
    else:
        # shift strictly below the smallest eigenvalue: lambda_1 >= min_V
        # plus the positive Dirichlet-Laplacian ground eigenvalue
        sigma = float(np.min(B_V.matrix.diagonal() / M.matrix.diagonal())) - 1.0
        try:
            w, v = spla.eigsh(K, k=count, M=M.matrix, sigma=sigma, which="LM")
        except spla.ArpackNoConvergence as exc:
            raise NumericFailure(
                f"eigensolver did not converge for {count} pairs: {exc}"
            ) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]

    v = _fix_signs(v)
    Mv = M.matrix @ v
    res = np.linalg.norm(K @ v - Mv * w[None, :], axis=0) / np.linalg.norm(v, axis=0)
    if np.any(res > _RESIDUAL_TOL):
        raise NumericFailure(
            f"eigen residuals {res.max()!r} exceed {_RESIDUAL_TOL}"
        )
    return w, v, res


def _h_orthonormalize(A: SparseOperator, vectors: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt in the A inner product (two passes)."""
    q = vectors.astype(np.float64).copy()
    for i in range(q.shape[1]):
        for _ in range(2):
            Aq = A.matrix @ q[:, i]
            for j in range(i):
                q[:, i] -= (q[:, j] @ Aq) * q[:, j]
                Aq = A.matrix @ q[:, i]
        nrm = np.sqrt(q[:, i] @ (A.matrix @ q[:, i]))
        if nrm <= 0.0 or not np.isfinite(nrm):
            raise NumericFailure("Gram-Schmidt breakdown in the H metric")
        q[:, i] /= nrm
    return q


def negative_eigenspace(mesh: Mesh, V, gap_tol: float = GAP_TOL,
                        min_count: int = 8,
                        dense_cutoff: int | None = None) -> SpectralBasis:
    """Compute the eigenpairs with negative eigenvalues, H-orthonormalized.

    Raises
    ------
    SpectralGapViolation
        If some eigenvalue lies within ``gap_tol`` of zero: the spectral-gap
        assumption behind the cone construction fails.
    """
    A = assemble_stiffness(mesh)
    B_V = assemble_weighted_mass(mesh, V)
    M = assemble_weighted_mass(mesh, 1.0)
    return negative_eigenspace_from_ops(mesh, A, B_V, M, gap_tol=gap_tol,
                                        min_count=min_count,
                                        dense_cutoff=dense_cutoff)


def negative_eigenspace_from_ops(mesh: Mesh, A: SparseOperator,
                                 B_V: SparseOperator, M: SparseOperator,
                                 gap_tol: float = GAP_TOL,
                                 min_count: int = 8,
                                 dense_cutoff: int | None = None) -> SpectralBasis:
    """As :func:`negative_eigenspace` with preassembled operators."""
    m = A.shape[0]
    count = min(m, max(2, min_count))
    while True:
        w, v, res = lowest_eigenpairs(A, B_V, M, count, dense_cutoff=dense_cutoff)
        if w[-1] > gap_tol or count == m:
            break
        count = min(m, 2 * count)

    near_zero = np.abs(w) <= gap_tol
    if np.any(near_zero):
        bad = float(w[np.flatnonzero(near_zero)[0]])
        raise SpectralGapViolation(
            f"eigenvalue {bad!r} lies within {gap_tol} of zero; "
            "the spectral-gap assumption fails on this mesh",
            eigenvalue=bad,
        )

    neg = w < 0.0
    vectors = v[:, neg]
    if vectors.shape[1]:
        vectors = _fix_signs(_h_orthonormalize(A, vectors))
        gram = vectors.T @ (A.matrix @ vectors)
        defect = np.abs(gram - np.eye(vectors.shape[1])).max()
        if defect > _ORTHO_TOL:
            raise NumericFailure(
                f"H-orthonormality defect {defect!r} exceeds {_ORTHO_TOL}"
            )
        K = A.matrix + B_V.matrix
        lam = w[neg]
        resid = np.linalg.norm(
            K @ vectors - (M.matrix @ vectors) * lam[None, :], axis=0
        ) / np.linalg.norm(vectors, axis=0)
        if np.any(resid > _RESIDUAL_TOL):
            raise NumericFailure(
                f"post-orthonormalization residual {resid.max()!r} "
                f"exceeds {_RESIDUAL_TOL}"
            )
    else:
        resid = np.empty(0)

    return SpectralBasis(
        mesh=mesh,
        eigenvalues=w[neg].copy(),
        vectors=vectors,
        residuals=resid,
        computed_eigenvalues=w.copy(),
        computed_residuals=res.copy(),
    )


def export_eigs_csv(basis: SpectralBasis, path) -> None:
    """Write ``index,lambda,residual`` rows for every computed eigenpair."""
    lines = ["index,lambda,residual"]
    for i, (lam, r) in enumerate(zip(basis.computed_eigenvalues,
                                     basis.computed_residuals)):
        lines.append(f"{i},{float(lam)!r},{float(r)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
