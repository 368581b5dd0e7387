"""P1 stiffness/mass assembly and the dual-cell finite-volume divergence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import StructuralError
from .mesh import DualMesh, TriMesh

__all__ = [
    "p1_gradients",
    "stiffness",
    "mass",
    "lumped_mass",
    "FvOperator",
    "fv_divergence",
    "load_vector",
    "nodal_values",
    "write_coo",
]


def p1_gradients(mesh: TriMesh) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape (cells, dim+1, dim)."""
    p = mesh.vertices[mesh.cells]
    if mesh.dim == 1:
        h = p[:, 1, 0] - p[:, 0, 0]
        return np.stack([-1 / h, 1 / h], axis=1)[:, :, None]
    x, y = p[..., 0], p[..., 1]
    twice_area = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return np.stack([gx, gy], axis=2) / twice_area[:, None, None]


def _assemble(mesh, local):
    k = mesh.cells.shape[1]
    rows = np.repeat(mesh.cells, k, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, k)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _dirichlet(A, mesh):
    idx = mesh.interior_nodes
    return A[idx][:, idx].tocsr()


def stiffness(fine: TriMesh, a=None, dirichlet: bool = True) -> sp.csr_matrix:
    """P1 stiffness matrix int grad(u) a grad(v), exact for cellwise-constant a.

    With ``dirichlet`` the boundary rows/columns are removed and the result
    is indexed by ``fine.interior_nodes``.
    """
    grads = p1_gradients(fine)
    coef = np.ones(fine.n_cells) if a is None else np.asarray(getattr(a, "values", a))
    meas = np.abs(fine.measures())
    local = np.einsum("tad,tbd->tab", grads, grads) * (coef * meas)[:, None, None]
    A = _assemble(fine, local)
    return _dirichlet(A, fine) if dirichlet else A


def mass(fine: TriMesh, dirichlet: bool = False) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    k = fine.dim + 1
    meas = np.abs(fine.measures())
    ref = (np.ones((k, k)) + np.eye(k)) / ((k + 1) * k)
    local = meas[:, None, None] * ref
    M = _assemble(fine, local)
    return _dirichlet(M, fine) if dirichlet else M


def lumped_mass(fine: TriMesh, dirichlet: bool = False) -> sp.csr_matrix:
    M = mass(fine, dirichlet=dirichlet)
    return sp.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()


@dataclass(frozen=True, eq=False)
class FvOperator:
    """g_u = B u, one value per dual cell, plus dual volumes ``w``.

    Only rows of interior fine vertices enter the discrete V-norm; boundary
    vertices carry no degree of freedom.
    """

    B: sp.csr_matrix
    w: np.ndarray
    rows: np.ndarray

    def apply(self, u) -> np.ndarray:
        return self.B @ u

    def vnorm_matrix(self) -> sp.csr_matrix:
        """Q with u^T Q v = sum over interior dual cells of |V| g_u g_v."""
        Bi = self.B[self.rows]
        return (Bi.T @ sp.diags(self.w[self.rows]) @ Bi).tocsr()

    def vnorm_sq(self, u) -> float:
        g = self.B[self.rows] @ u
        return float(np.dot(self.w[self.rows] * g, g))


def fv_divergence(fine: TriMesh, a, dual: DualMesh) -> FvOperator:
    """Finite-volume operator (1/|V_i|) int grad(1_{V_i}) a grad(u).

    Evaluated as minus the flux of a grad(u) through the boundary segments
    of each dual cell, which is exact for P1 ``u`` and cellwise-constant ``a``.
    """
    if dual.mesh is not fine:
        raise StructuralError("dual mesh was not built from this fine mesh")
    grads = p1_gradients(fine)
    coef = np.asarray(getattr(a, "values", a), dtype=float)
    if coef.shape != (fine.n_cells,):
        raise StructuralError("coefficient does not match the fine mesh cells")
    t = dual.seg_cell
    # flux of grad(lambda_k) through each segment, per local vertex k
    ndotg = np.einsum("sd,skd->sk", dual.seg_normal, grads[t])
    flux = (coef[t] * dual.seg_length)[:, None] * ndotg
    cols = fine.cells[t]
    k = cols.shape[1]
    rows_own = np.repeat(dual.seg_owner, k)
    inner = dual.seg_neighbor >= 0
    rows_nbr = np.repeat(dual.seg_neighbor[inner], k)
    rows = np.concatenate([rows_own, rows_nbr])
    cols_all = np.concatenate([cols.ravel(), cols[inner].ravel()])
    vals = np.concatenate([-flux.ravel(), flux[inner].ravel()])
    n = fine.n_vertices
    F = sp.csr_matrix((vals, (rows, cols_all)), shape=(n, n))
    B = (sp.diags(1.0 / dual.volumes) @ F).tocsr()
    B.sort_indices()
    return FvOperator(B, dual.volumes, fine.interior_nodes)


def nodal_values(fine: TriMesh, g) -> np.ndarray:
    """Sample a callable (points -> values), a scalar or pass through a vector."""
    if callable(g):
        return np.asarray(g(fine.vertices), dtype=float).reshape(fine.n_vertices)
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        return np.full(fine.n_vertices, float(g))
    if g.shape != (fine.n_vertices,):
        raise StructuralError(f"expected {fine.n_vertices} nodal values, got {g.shape}")
    return g


def load_vector(fine: TriMesh, g, dirichlet: bool = False, M=None) -> np.ndarray:
    """P1 load vector int g psi_k with g replaced by its nodal interpolant."""
    M = mass(fine) if M is None else M
    b = M @ nodal_values(fine, g)
    return b[fine.interior_nodes] if dirichlet else b


def write_coo(A, path) -> None:
    """Coordinate text dump, one ``row col value`` triple per line."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as f:
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            f.write(f"{r} {c} {float(v)!r}\n")
