"""Fine reference solves, coarse Galerkin solves on an RPS basis, and
recovery of a solution from its values at the coarse nodes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import load_vector, mass, stiffness
from .basis import RpsBasis
from .errors import ConditioningError, MeasurementCoverageError, SolverError, StructuralError
from .mesh import TriMesh, coarse_layers, mesh_norm, ancestor_cells

__all__ = [
    "Solution",
    "CoarseSystem",
    "solve_fine",
    "coarse_solve",
    "interpolate",
    "recover",
    "localization_diagnostics",
]


@dataclass(frozen=True, eq=False)
class Solution:
    """Fine nodal vector (zero on the boundary) and where it came from."""

    values: np.ndarray
    tag: str

    def __sub__(self, other):
        return self.values - getattr(other, "values", other)


@dataclass(frozen=True, eq=False)
class CoarseSystem:
    S: np.ndarray
    b: np.ndarray
    c: np.ndarray


def solve_fine(fine: TriMesh, coeffs, g, tol: float = 1e-10) -> Solution:
    """P1 Galerkin solution of -div(a grad u) = g, u = 0 on the boundary."""
    K = stiffness(fine, coeffs, dirichlet=True)
    b = load_vector(fine, g, dirichlet=True)
    u = np.zeros(fine.n_vertices)
    if np.any(b):
        x = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(b)
        res = np.linalg.norm(K @ x - b) / np.linalg.norm(b)
        if res > tol:
            raise SolverError(f"fine solve residual {res:.3e} exceeds {tol:.1e}", residual=res)
        u[fine.interior_nodes] = x
    return Solution(u, "fine-reference")


def _tag(basis):
    return "coarse-global" if basis.is_global else f"coarse-localized({basis.layers})"


def coarse_solve(basis: RpsBasis, g, K=None) -> tuple[CoarseSystem, Solution]:
    """Galerkin projection onto span(basis); S_ij = phi_i^T K phi_j."""
    fine = basis.fine
    K = stiffness(fine, basis.coeffs, dirichlet=False) if K is None else K
    Phi = basis.matrix()
    S = (Phi.T @ (K @ Phi)).toarray()
    S = 0.5 * (S + S.T)
    b = Phi.T @ load_vector(fine, g)
    try:
        c = sla.cho_solve(sla.cho_factor(S, lower=True), b)
    except sla.LinAlgError as exc:
        raise ConditioningError("coarse stiffness matrix is not positive definite",
                                condition=float(np.linalg.cond(S))) from exc
    return CoarseSystem(S, b, c), Solution(Phi @ c, _tag(basis))


def interpolate(basis: RpsBasis, nodal_values) -> Solution:
    """sum_i v_i phi_i for one value per coarse node."""
    v = np.asarray(nodal_values, dtype=float)
    if v.shape != (len(basis),):
        raise StructuralError(f"expected {len(basis)} nodal values, got shape {v.shape}")
    return Solution(basis.matrix() @ v, "interpolant")


def recover(basis: RpsBasis, measurements, M: float | None = None):
    """Reconstruct u from u(x_i) at every coarse node.

    ``measurements`` maps coarse-node index to value (or is a full vector).
    Returns the recovery and a report of the a priori bound shape; the
    constant C is unknown and is never given a number.
    """
    N = len(basis)
    if isinstance(measurements, dict):
        missing = sorted(set(range(N)) - set(measurements))
        if missing:
            head = ", ".join(map(str, missing[:10]))
            raise MeasurementCoverageError(f"no measurement for {len(missing)} coarse node(s): "
                                           f"{head}{' ...' if len(missing) > 10 else ''}")
        v = np.array([measurements[i] for i in range(N)], dtype=float)
    else:
        v = np.asarray(measurements, dtype=float)
        if v.shape != (N,):
            raise MeasurementCoverageError(f"expected {N} measurements, got {v.shape}")
    sol = interpolate(basis, v)
    H = mesh_norm(basis.fine.vertices[basis.fine.coarse_nodes], basis.fine)
    report = {"H": H, "M": M,
              "bound": f"||u - u_in||_H1 <= C * H * M with H = {H:.6g}, "
                       f"M = {'<not given>' if M is None else f'{M:.6g}'}"}
    return Solution(sol.values, "recovery"), report


def localization_diagnostics(basis: RpsBasis, i: int, Mfull=None) -> dict:
    """Computable surrogates for localization quality of one basis function.

    Returns the discrete V-norm of phi_i and the L2 norm of phi_i over the
    outermost coarse layer of its support.
    """
    f = basis.functions[i]
    fine = basis.fine
    phi = f.dense(fine.n_vertices)
    vnorm = float(np.sqrt(max(f.objective, 0.0)))
    if f.support is None:
        return {"node": i, "v_norm": vnorm, "boundary_layer_L2": 0.0}
    outer = coarse_layers(basis.coarse, i, f.support.layers)
    if f.support.layers > 1:
        outer &= ~coarse_layers(basis.coarse, i, f.support.layers - 1)
    cells = outer[ancestor_cells(fine, basis.coarse)]
    sub = fine.cells[cells]
    meas = np.abs(fine.measures()[cells])
    k = fine.dim + 1
    ref = (np.ones((k, k)) + np.eye(k)) / ((k + 1) * k)
    vals = phi[sub]
    l2sq = float(np.einsum("t,ta,ab,tb->", meas, vals, ref, vals))
    return {"node": i, "v_norm": vnorm, "boundary_layer_L2": float(np.sqrt(l2sq))}
