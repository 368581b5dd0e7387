"""Global and localized rough polyharmonic spline bases.

Each basis function minimizes the discrete V-norm sum_i |V_i| g_phi(y_i)^2
over fine P1 vectors that take the value 1 at its own coarse node, 0 at the
other coarse nodes of the support, and vanish outside the support.  The
Kronecker constraints are eliminated, leaving a symmetric positive definite
system on the free fine nodes.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FvOperator, fv_divergence
from .errors import ConditioningError, DegenerateSupportError, SolverError, StructuralError
from .mesh import SubdomainMask, TriMesh, dual_cells, layer_region

__all__ = ["BasisFunction", "RpsBasis", "RpsSolver", "gram", "theta"]

log = logging.getLogger(__name__)

DENSE_LIMIT = 3000


@dataclass(frozen=True, eq=False)
class BasisFunction:
    """One basis vector stored on its support.

    ``nodes`` are fine vertex indices (sorted) and ``values`` the nodal
    values there; every other fine vertex carries 0.
    """

    node: int
    nodes: np.ndarray
    values: np.ndarray
    support: SubdomainMask | None
    objective: float
    report: dict = field(default_factory=dict)

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[self.nodes] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass(eq=False)
class RpsBasis:
    functions: list
    fine: TriMesh
    coarse: TriMesh
    coeffs: object
    layers: int | None
    fv: FvOperator | None = None

    def __len__(self):
        return len(self.functions)

    @property
    def is_global(self) -> bool:
        return self.layers is None

    def matrix(self) -> sp.csc_matrix:
        """Fine-by-coarse matrix whose columns are the basis vectors."""
        rows = np.concatenate([f.nodes for f in self.functions])
        vals = np.concatenate([f.values for f in self.functions])
        cols = np.concatenate([np.full(len(f.nodes), k) for k, f in enumerate(self.functions)])
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.fine.n_vertices, len(self)))

    def stored_nonzeros(self) -> int:
        return sum(f.nnz for f in self.functions)

    def objectives(self) -> np.ndarray:
        return np.array([f.objective for f in self.functions])


class _Factor:
    """Reusable solver for one reduced matrix."""

    def __init__(self, A, method, tol, max_iter):
        self.n = A.shape[0]
        self.method = method
        if method == "auto":
            method = "dense" if self.n < DENSE_LIMIT else "direct"
        self.kind = method
        self.tol = tol
        self.A = A.tocsr()
        if method == "dense":
            try:
                self._chol = sla.cho_factor(self.A.toarray(), lower=True)
            except sla.LinAlgError as exc:
                raise SolverError(f"dense factorization failed: {exc}") from exc
        elif method == "direct":
            self._lu = spla.splu(self.A.tocsc(), permc_spec="COLAMD")
        elif method == "pcg":
            self._jacobi = sp.diags(1.0 / self.A.diagonal())
            self.max_iter = max_iter or int(50 * np.sqrt(self.n) + 1000)
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def solve(self, rhs):
        iterations = 0
        if self.kind == "dense":
            x = sla.cho_solve(self._chol, rhs)
        elif self.kind == "direct":
            x = self._lu.solve(rhs)
        else:
            counter = [0]

            def count(_):
                counter[0] += 1

            x, info = spla.cg(self.A, rhs, rtol=self.tol, atol=0.0, maxiter=self.max_iter,
                              M=self._jacobi, callback=count)
            iterations = counter[0]
            if info > 0:
                res = np.linalg.norm(self.A @ x - rhs) / np.linalg.norm(rhs)
                raise SolverError(f"PCG did not converge in {self.max_iter} iterations "
                                  f"(relative residual {res:.3e})", residual=res)
        r = self.A @ x - rhs
        denom = np.linalg.norm(rhs, axis=0)
        res = np.max(np.linalg.norm(r, axis=0) / np.where(denom > 0, denom, 1.0))
        if res > self.tol and self.kind != "pcg":
            x = x - self.solve_raw(r)
            r = self.A @ x - rhs
            res = np.max(np.linalg.norm(r, axis=0) / np.where(denom > 0, denom, 1.0))
        if res > self.tol:
            raise SolverError(f"relative residual {res:.3e} exceeds tolerance {self.tol:.1e}",
                              residual=float(res))
        return x, {"method": self.kind, "unknowns": self.n, "iterations": iterations,
                   "residual": float(res)}

    def solve_raw(self, rhs):
        if self.kind == "dense":
            return sla.cho_solve(self._chol, rhs)
        return self._lu.solve(rhs)


class RpsSolver:
    """Builds basis functions for one (coarse mesh, fine mesh, coefficient).

    ``method`` selects the reduced solver: ``"auto"`` (dense Cholesky below
    3000 unknowns, sparse LU above), ``"dense"``, ``"direct"`` (sparse LU) or
    ``"pcg"`` (Jacobi-preconditioned CG, capped at 50 sqrt(n) + 1000
    iterations unless ``max_iter`` is given).  The global problem shares one matrix across
    all nodes and is always factorized once.
    """

    def __init__(self, coarse: TriMesh, fine: TriMesh, coeffs, tol=1e-10, method="auto",
                 max_iter=None):
        if fine.root() is not coarse.root() or fine.n_vertices < coarse.n_vertices:
            raise StructuralError("fine mesh must refine the coarse mesh")
        self.coarse = coarse
        self.fine = fine
        self.coeffs = coeffs
        self.tol = tol
        self.method = method
        self.max_iter = max_iter
        self.dual = dual_cells(fine)
        self.fv = fv_divergence(fine, coeffs, self.dual)
        self.Q = self.fv.vnorm_matrix()
        self.coarse_vertices = np.asarray(fine.coarse_nodes)
        self._is_coarse = np.zeros(fine.n_vertices, dtype=bool)
        self._is_coarse[self.coarse_vertices] = True
        self._global = None

    @property
    def n_coarse(self) -> int:
        return len(self.coarse_vertices)

    def support(self, i: int, layers: int | None) -> SubdomainMask | None:
        if layers is None:
            return None
        return layer_region(self.coarse, self.fine, i, layers)

    def _global_factor(self):
        if self._global is None:
            free = self.fine.interior_nodes[~self._is_coarse[self.fine.interior_nodes]]
            if len(free) == 0:
                # constraints fix every value: the basis is the coarse hat
                self._global = (free, None)
                return self._global
            Qff = self.Q[free][:, free]
            method = "dense" if len(free) < DENSE_LIMIT else "direct"
            self._global = (free, _Factor(Qff, method, self.tol, self.max_iter))
        return self._global

    def _global_solve(self, rhs):
        free, fac = self._global_factor()
        if fac is None:
            return np.zeros(rhs.shape), {"method": "none", "unknowns": 0, "iterations": 0,
                                         "residual": 0.0}
        return fac.solve(rhs)

    def _finish(self, i, free, x, support, report):
        nodes = np.concatenate([free, [self.coarse_vertices[i]]])
        values = np.concatenate([x, [1.0]])
        order = np.argsort(nodes, kind="stable")
        nodes, values = nodes[order], values[order]
        phi = np.zeros(self.fine.n_vertices)
        phi[nodes] = values
        objective = float(phi @ (self.Q @ phi))
        return BasisFunction(int(i), nodes, values, support, objective, report)

    def solve_basis(self, i: int, layers: int | None = None) -> BasisFunction:
        """Minimizer for coarse node ``i`` on the ``layers`` patch (None: global)."""
        if not 0 <= i < self.n_coarse:
            raise IndexError(f"coarse node index {i} out of range [0, {self.n_coarse})")
        support = self.support(i, layers)
        ci = self.coarse_vertices[i]
        if support is None or support.saturated:
            free, _ = self._global_factor()
            rhs = -self.Q[free][:, [ci]].toarray().ravel()
            x, report = self._global_solve(rhs)
            return self._finish(i, free, x, support, report)
        nodes = support.fine_nodes
        if ci not in set(nodes.tolist()):
            raise DegenerateSupportError(f"node {i} is not interior to its support")
        free = nodes[~self._is_coarse[nodes]]
        if len(free) == 0:
            raise DegenerateSupportError(f"support of node {i} (l={layers}) has no free fine nodes")
        Qf = self.Q[free]
        fac = _Factor(Qf[:, free], self.method, self.tol, self.max_iter)
        rhs = -Qf[:, [ci]].toarray().ravel()
        try:
            x, report = fac.solve(rhs)
        except SolverError as exc:
            exc.node = int(i)
            raise SolverError(f"node {i}: {exc}", residual=exc.residual, node=int(i)) from exc
        return self._finish(i, free, x, support, report)

    def solve_all(self, layers: int | None = None, workers: int = 1) -> RpsBasis:
        """Every basis function; the result does not depend on ``workers``."""
        if layers is None:
            free, _ = self._global_factor()
            rhs = -self.Q[free][:, self.coarse_vertices].toarray()
            x, report = self._global_solve(rhs)
            funcs = [self._finish(i, free, x[:, i], None, report) for i in range(self.n_coarse)]
        elif workers <= 1:
            funcs = [self.solve_basis(i, layers) for i in range(self.n_coarse)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                funcs = list(pool.map(lambda i: self.solve_basis(i, layers),
                                      range(self.n_coarse)))
        log.info("built %d basis functions (layers=%s)", len(funcs), layers)
        return RpsBasis(funcs, self.fine, self.coarse, self.coeffs, layers, self.fv)


def gram(basis: RpsBasis, Q=None) -> np.ndarray:
    """P_ij = sum over interior dual cells of |V| g_phi_i g_phi_j."""
    Q = basis.fv.vnorm_matrix() if Q is None else Q
    Phi = basis.matrix()
    P = (Phi.T @ (Q @ Phi)).toarray()
    return 0.5 * (P + P.T)


def theta(P: np.ndarray) -> np.ndarray:
    """Inverse of the Gram matrix by Cholesky factorization."""
    try:
        c = sla.cho_factor(P, lower=True)
    except sla.LinAlgError as exc:
        raise ConditioningError("Gram matrix is not positive definite",
                                condition=float(np.linalg.cond(P))) from exc
    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > 1e14:
        raise ConditioningError(f"Gram matrix is numerically singular (cond ~ {cond:.2e})",
                                condition=float(cond))
    T = sla.cho_solve(c, np.eye(len(P)))
    return 0.5 * (T + T.T)
