"""Wave and heat equations on the fine P1 space or on an RPS coarse space.

Both spaces expose the same (M, K, load, lift) surface so the time steppers
never know which one they integrate.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import lumped_mass, mass, nodal_values, stiffness
from .basis import RpsBasis
from .errors import ConfigurationError, SolverError

__all__ = ["TimeGrid", "Trajectory", "FineSpace", "CoarseSpace", "newmark",
           "implicit_euler", "solve_wave", "solve_parabolic", "wave_energy"]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"final time must be positive, got {self.T}", field="T")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"must be an integer >= 1, got {self.steps}", field="steps")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


@dataclass(eq=False)
class Trajectory:
    """Snapshots of a time-dependent solution.

    ``coefficients`` holds the state in the space's own unknowns (interior
    fine values or coarse coefficients c_i(t)); ``values`` the fine nodal
    vectors.
    """

    times: np.ndarray
    values: np.ndarray
    coefficients: np.ndarray
    rho: float = 1.0

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


class FineSpace:
    def __init__(self, fine, coeffs, lumped=False):
        self.fine = fine
        self.idx = fine.interior_nodes
        self.Mfull = mass(fine)
        Mint = lumped_mass(fine) if lumped else self.Mfull
        self.M = Mint[self.idx][:, self.idx].tocsc()
        self.K = stiffness(fine, coeffs, dirichlet=True).tocsc()

    def load(self, g_nodal):
        return (self.Mfull @ g_nodal)[self.idx]

    def lift(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], self.fine.n_vertices))
        out[:, self.idx] = x
        return out

    def restrict(self, u_full):
        return np.asarray(u_full)[self.idx]


class CoarseSpace:
    def __init__(self, basis: RpsBasis, lumped=False):
        self.fine = basis.fine
        self.Phi = basis.matrix()
        self.Mfull = mass(self.fine)
        Mf = lumped_mass(self.fine) if lumped else self.Mfull
        Kf = stiffness(self.fine, basis.coeffs, dirichlet=False)
        M = (self.Phi.T @ (Mf @ self.Phi)).toarray()
        K = (self.Phi.T @ (Kf @ self.Phi)).toarray()
        self.M = 0.5 * (M + M.T)
        self.K = 0.5 * (K + K.T)

    def load(self, g_nodal):
        return self.Phi.T @ (self.Mfull @ g_nodal)

    def lift(self, c):
        return np.asarray((self.Phi @ np.atleast_2d(c).T).T)

    def restrict(self, u_full):
        # Galerkin (mass) projection of a fine vector onto the coarse space
        rhs = self.Phi.T @ (self.Mfull @ u_full)
        return sla.solve(self.M, rhs, assume_a="pos")


class _Solver:
    def __init__(self, A):
        try:
            if sp.issparse(A):
                self._lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
                self.solve = self._lu.solve
            else:
                c = sla.cho_factor(A, lower=True)
                self.solve = lambda b: sla.cho_solve(c, b)
        except (RuntimeError, sla.LinAlgError) as exc:
            raise SolverError(f"factorization failed: {exc}") from exc


def _forcing(space, g):
    """Return f(t) -> load vector for g(x), g(x, t), a constant or None."""
    if g is None:
        zero = np.zeros(space.K.shape[0])
        return lambda t: zero
    if callable(g) and len(inspect.signature(g).parameters) >= 2:
        return lambda t: space.load(nodal_values(space.fine, lambda x: g(x, t)))
    b = space.load(nodal_values(space.fine, g))
    return lambda t: b


def newmark(M, K, force, grid: TimeGrid, u0, v0, every=1, beta=0.25, gamma=0.5):
    """Newmark integration of M u'' + K u = f(t); returns (times, states, velocities)."""
    dt = grid.dt
    u, v = np.array(u0, dtype=float), np.array(v0, dtype=float)
    acc = _Solver(M).solve(force(0.0) - K @ u)
    c0 = 1.0 / (beta * dt**2)
    c1 = 1.0 / (beta * dt)
    c2 = 1.0 / (2 * beta) - 1.0
    eff = _Solver(K + c0 * M)
    times, states, vels = [0.0], [u.copy()], [v.copy()]
    for n in range(1, grid.steps + 1):
        t = n * dt
        u_new = eff.solve(force(t) + M @ (c0 * u + c1 * v + c2 * acc))
        a_new = c0 * (u_new - u) - c1 * v - c2 * acc
        v = v + dt * ((1 - gamma) * acc + gamma * a_new)
        u, acc = u_new, a_new
        if n % every == 0 or n == grid.steps:
            times.append(t)
            states.append(u.copy())
            vels.append(v.copy())
    return np.array(times), np.array(states), np.array(vels)


def implicit_euler(M, K, force, grid: TimeGrid, u0, every=1):
    """(M + dt K) u^{n+1} = M u^n + dt f(t_{n+1})."""
    dt = grid.dt
    u = np.array(u0, dtype=float)
    step = _Solver(M + dt * K)
    times, states = [0.0], [u.copy()]
    for n in range(1, grid.steps + 1):
        t = n * dt
        u = step.solve(M @ u + dt * force(t))
        if n % every == 0 or n == grid.steps:
            times.append(t)
            states.append(u.copy())
    return np.array(times), np.array(states)


def _initial(space, x0):
    n = space.K.shape[0]
    if x0 is None:
        return np.zeros(n)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (n,):
        return x0
    return space.restrict(x0)


def solve_wave(space, g, grid: TimeGrid, rho: float = 1.0, u0=None, v0=None,
               every: int = 1) -> Trajectory:
    """rho u_tt - div(a grad u) = g with average-acceleration Newmark.

    Initial data default to zero; they may be given in the space's unknowns
    or as fine nodal vectors (projected onto the space).
    """
    force = _forcing(space, g)
    times, states, _ = newmark(rho * space.M, space.K, force, grid,
                               _initial(space, u0), _initial(space, v0), every=every)
    return Trajectory(times, space.lift(states), states, rho)


def solve_parabolic(space, g, grid: TimeGrid, u0=None, every: int = 1) -> Trajectory:
    """u_t - div(a grad u) = g with implicit Euler."""
    force = _forcing(space, g)
    times, states = implicit_euler(space.M, space.K, force, grid, _initial(space, u0),
                                   every=every)
    return Trajectory(times, space.lift(states), states)


def wave_energy(M, K, u, v) -> float:
    return 0.5 * float(v @ (M @ v)) + 0.5 * float(u @ (K @ u))
