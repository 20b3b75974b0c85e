"""Finite-element derivative matrices and FE total-variation functionals.

On each simplex the nodal basis functions are linear polynomials; their
constant gradients, weighted by the element measure, fill one row of the
per-direction derivative matrices. Applying those matrices to a nodal field
gives per-element integrated partial derivatives, so the L1 norms of the
matrix-vector products equal the continuous TV integrals of the piecewise
linear interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, element_measures


class SingularElementError(Exception):
    """A simplex is degenerate (zero measure), so its basis is undefined."""


@dataclass(frozen=True)
class GradientMatrices:
    """Sparse per-direction derivative matrices of shape (M, N).

    Row i of each matrix holds the element measure times the corresponding
    basis-gradient component at the columns of element i's vertices, so each
    row has exactly dim+1 stored entries and sums to zero.
    """

    dx: sp.csr_matrix
    dy: sp.csr_matrix
    dz: sp.csr_matrix = None
    element_measures: np.ndarray = None

    @property
    def dim(self) -> int:
        return 2 if self.dz is None else 3

    @property
    def per_direction(self) -> tuple:
        if self.dz is None:
            return (self.dx, self.dy)
        return (self.dx, self.dy, self.dz)


def basis_coefficients(vertices, elem_id: int = None):
    """Coefficients of the nodal linear basis functions of one simplex.

    For 2D returns three (a, b, c) tuples with phi(x, y) = a*x + b*y + c;
    for 3D four (a, b, d, c) tuples with phi = a*x + b*y + d*z + c. The
    Kronecker property phi_j(v_i) = delta_ij holds for either orientation.
    """
    v = np.asarray(vertices, dtype=float)
    k, dim = v.shape
    if k != dim + 1 or dim not in (2, 3):
        raise ValueError(f"expected dim+1 vertices of dimension 2 or 3, got shape {v.shape}")
    where = "" if elem_id is None else f" (element {elem_id})"
    if dim == 2:
        (x1, y1), (x2, y2), (x3, y3) = v
        det = x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2)
        scale = max(np.abs(v).max(), 1.0)
        if abs(det) <= 1e-14 * scale * scale:
            raise SingularElementError(f"degenerate triangle{where}: vertices {v.tolist()}")
        return [
            ((y2 - y3) / det, (x3 - x2) / det, (x2 * y3 - x3 * y2) / det),
            ((y3 - y1) / det, (x1 - x3) / det, (x3 * y1 - x1 * y3) / det),
            ((y1 - y2) / det, (x2 - x1) / det, (x1 * y2 - x2 * y1) / det),
        ]
    vand = np.hstack([v, np.ones((4, 1))])
    scale = max(np.abs(v).max(), 1.0)
    if abs(np.linalg.det(vand)) <= 1e-14 * scale**3:
        raise SingularElementError(f"degenerate tetrahedron{where}: vertices {v.tolist()}")
    coeffs = np.linalg.solve(vand, np.eye(4))
    return [tuple(coeffs[:, j]) for j in range(4)]


def _basis_gradients(mesh: Mesh) -> np.ndarray:
    """(M, dim+1, dim) array of basis-function gradients, vectorized."""
    v = mesh.nodes[mesh.elements]  # (M, dim+1, dim)
    dim = mesh.dim
    if dim == 2:
        x, y = v[..., 0], v[..., 1]
        det = (
            x[:, 0] * (y[:, 1] - y[:, 2])
            + x[:, 1] * (y[:, 2] - y[:, 0])
            + x[:, 2] * (y[:, 0] - y[:, 1])
        )
        grads = np.empty((mesh.n_elements, 3, 2))
        for j in range(3):
            p, q = (j + 1) % 3, (j + 2) % 3
            grads[:, j, 0] = (y[:, p] - y[:, q]) / det
            grads[:, j, 1] = (x[:, q] - x[:, p]) / det
        return grads
    vand = np.concatenate([v, np.ones((mesh.n_elements, 4, 1))], axis=2)
    try:
        inv = np.linalg.inv(vand)
    except np.linalg.LinAlgError as exc:
        dets = np.abs(np.linalg.det(vand))
        bad = int(np.argmin(dets))
        raise SingularElementError(f"degenerate tetrahedron (element {bad})") from exc
    # inv[:, c, j] is coefficient c of basis function j; gradients are rows 0..2
    return np.transpose(inv[:, :3, :], (0, 2, 1))


def assemble_gradient_matrices(mesh: Mesh) -> GradientMatrices:
    """Assemble the sparse derivative matrices of a mesh."""
    measures = element_measures(mesh)
    bad = np.where(measures == 0)[0]
    if bad.size:
        raise SingularElementError(f"degenerate simplex (element {int(bad[0])})")
    grads = _basis_gradients(mesh)  # (M, dim+1, dim)
    m, k = mesh.n_elements, mesh.dim + 1
    rows = np.repeat(np.arange(m), k)
    cols = mesh.elements.ravel()
    mats = []
    for c in range(mesh.dim):
        vals = measures[:, None] * grads[:, :, c]
        # the coefficients sum to zero analytically; recenter rounding residue
        vals = vals - vals.mean(axis=1, keepdims=True)
        mat = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(m, mesh.n_nodes))
        mat.sort_indices()
        mats.append(mat)
    dz = mats[2] if mesh.dim == 3 else None
    return GradientMatrices(dx=mats[0], dy=mats[1], dz=dz, element_measures=measures)


def _check_field(g: GradientMatrices, mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (g.dx.shape[1],):
        raise ValueError(f"field length {mu.shape} does not match {g.dx.shape[1]} nodes")
    return mu


def export_matrix_triplets(mat: sp.spmatrix, path) -> None:
    """Write a sparse matrix as 'row col value' lines for external cross-checks."""
    coo = mat.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def load_matrix_triplets(path) -> sp.csr_matrix:
    """Read a matrix written by export_matrix_triplets."""
    with open(path) as fh:
        header = fh.readline().split()
        rows_n, cols_n = int(header[1]), int(header[2])
        rows, cols, vals = [], [], []
        for line in fh:
            parts = line.split()
            if parts:
                rows.append(int(parts[0]))
                cols.append(int(parts[1]))
                vals.append(float(parts[2]))
    return sp.csr_matrix((vals, (rows, cols)), shape=(rows_n, cols_n))


def fe_tv_aniso(g: GradientMatrices, mu) -> float:
    """Anisotropic FE total variation: sum of per-direction L1 norms."""
    mu = _check_field(g, mu)
    return float(sum(np.abs(d @ mu).sum() for d in g.per_direction))


def fe_tv_iso(g: GradientMatrices, mu) -> float:
    """Isotropic FE total variation: sum over elements of gradient magnitudes."""
    mu = _check_field(g, mu)
    sq = sum((d @ mu) ** 2 for d in g.per_direction)
    return float(np.sqrt(sq).sum())
