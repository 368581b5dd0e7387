"""Norms, error tables, localization decay curves and rate fits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import mass, stiffness
from .basis import RpsSolver
from .coeff import CoeffSpec, sample
from .errors import ConfigurationError, FitError
from .homog import coarse_solve, interpolate, solve_fine
from .mesh import build_structured, refine

__all__ = [
    "ErrorReport",
    "NormOps",
    "norms",
    "RateFit",
    "fit_rate",
    "fit_decay",
    "decay_curve",
    "layer_error_table",
    "convergence_table",
    "auto_layers",
    "prepare",
    "named_rhs",
    "write_table",
]


@dataclass
class ErrorReport:
    L2: float
    H1: float
    energy: float
    Linf: float
    rel_L2: float = math.nan
    rel_H1: float = math.nan
    rel_energy: float = math.nan
    rel_Linf: float = math.nan
    meta: dict = field(default_factory=dict)


class NormOps:
    """Cached mass and stiffness matrices for repeated norm evaluations."""

    def __init__(self, mesh, coeffs=None):
        self.mesh = mesh
        self.M = mass(mesh)
        self.K1 = stiffness(mesh, None, dirichlet=False)
        self.Ka = self.K1 if coeffs is None else stiffness(mesh, coeffs, dirichlet=False)

    def l2(self, u):
        return math.sqrt(max(float(u @ (self.M @ u)), 0.0))

    def h1(self, u):
        return math.sqrt(max(float(u @ (self.K1 @ u)), 0.0))

    def energy(self, u):
        return math.sqrt(max(float(u @ (self.Ka @ u)), 0.0))

    def report(self, u, reference=None, **meta):
        u = np.asarray(getattr(u, "values", u), dtype=float)
        rep = ErrorReport(self.l2(u), self.h1(u), self.energy(u),
                          float(np.max(np.abs(u))) if u.size else 0.0, meta=dict(meta))
        if reference is not None:
            ref = np.asarray(getattr(reference, "values", reference), dtype=float)
            rel = self.report(ref)
            for name in ("L2", "H1", "energy", "Linf"):
                den = getattr(rel, name)
                setattr(rep, f"rel_{name}", getattr(rep, name) / den if den > 0 else math.nan)
        return rep


def norms(u, mesh, coeffs=None, reference=None, **meta) -> ErrorReport:
    """L2 (mass matrix), H1 seminorm (a = 1), energy (a-weighted), max-nodal norms.

    With ``reference`` the relative variants divide by its norms.
    """
    return NormOps(mesh, coeffs).report(u, reference, **meta)


@dataclass
class RateFit:
    log_x: np.ndarray
    log_y: np.ndarray
    slope: float
    intercept: float
    residual: float


def fit_rate(xs, ys) -> RateFit:
    """Least-squares line through (log x, log y)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or xs.size != ys.size:
        raise FitError(f"need at least 2 matching points, got {xs.size} and {ys.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise FitError("log-log fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return RateFit(lx, ly, float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


def fit_decay(layers, errors) -> RateFit:
    """Least-squares line through (l, log err); the slope is the decay rate per layer."""
    ls = np.asarray(layers, dtype=float)
    es = np.asarray(errors, dtype=float)
    if ls.size < 2 or ls.size != es.size:
        raise FitError(f"need at least 2 matching points, got {ls.size} and {es.size}")
    if np.any(es <= 0):
        raise FitError("log-linear fit needs positive errors")
    ly = np.log(es)
    slope, intercept = np.polyfit(ls, ly, 1)
    resid = ly - (slope * ls + intercept)
    return RateFit(ls, ly, float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


def auto_layers(H: float) -> int:
    """Layer count growing like log(1/H): ceil(2 log2(1/H))."""
    return int(math.ceil(2 * math.log2(1.0 / H) - 1e-12))


def named_rhs(spec, dim: int):
    """Right-hand side from a config value: a number or one of the names
    ``one``, ``sin_sin``, ``manufactured`` (2 pi^2 sin sin in 2D, pi^2 sin in 1D),
    ``quadratic_1d`` (g = 2)."""
    if isinstance(spec, dict):
        if "constant" in spec:
            return float(spec["constant"])
        spec = spec.get("name")
    if isinstance(spec, (int, float)):
        return float(spec)
    pi = np.pi
    if spec == "one":
        return 1.0
    if spec == "quadratic_1d":
        return 2.0
    if spec == "sin_sin":
        return lambda x: np.prod(np.sin(pi * x), axis=1)
    if spec == "manufactured":
        return lambda x: dim * pi**2 * np.prod(np.sin(pi * x), axis=1)
    raise ConfigurationError(f"unknown right-hand side {spec!r}", field="rhs")


def prepare(dim, coarse_divisions, refinements, coeff):
    """Coarse mesh, fine mesh and sampled coefficient for one experiment."""
    coarse = build_structured(dim, coarse_divisions)
    fine = refine(coarse, refinements)
    spec = coeff if isinstance(coeff, CoeffSpec) else CoeffSpec.from_dict(coeff)
    return coarse, fine, sample(spec, fine)


def _row(key, value, ops, e):
    return {key: value, "err_L2": ops.l2(e), "err_H1": ops.h1(e),
            "err_Linf": float(np.max(np.abs(e)))}


def decay_curve(solver: RpsSolver, i: int, layer_range, reference=None, ops=None):
    """||phi_i - phi_i^loc|| for each layer count.

    ``reference`` defaults to the global basis function; pass a
    BasisFunction (for example a large-l localized one) to substitute it.
    Returns (rows, reference tag).
    """
    n = solver.fine.n_vertices
    ref = solver.solve_basis(i, None) if reference is None else reference
    tag = "global" if ref.support is None else f"localized(l={ref.support.layers})"
    ops = ops or NormOps(solver.fine, solver.coeffs)
    phi = ref.dense(n)
    rows = []
    for l in layer_range:
        loc = solver.solve_basis(i, int(l)).dense(n)
        rows.append(_row("l", int(l), ops, phi - loc))
    return rows, tag


def layer_error_table(solver: RpsSolver, g, layer_range, reference=None, workers=1,
                      include_global=True, ops=None):
    """Coarse-solution error against the fine solution for each layer count.

    The last row (l = "global") uses the global basis when requested.
    """
    ops = ops or NormOps(solver.fine, solver.coeffs)
    u = solve_fine(solver.fine, solver.coeffs, g) if reference is None else reference
    rows = []
    for l in list(layer_range) + ([None] if include_global else []):
        basis = solver.solve_all(None if l is None else int(l), workers=workers)
        _, uh = coarse_solve(basis, g, K=ops.Ka)
        rows.append(_row("l", "global" if l is None else int(l), ops, u.values - uh.values))
    return rows


def convergence_table(dim, coeff, g, coarse_divisions, fine_divisions, layers="auto",
                      tol=1e-10, method="auto", workers=1):
    """Errors of the Galerkin and interpolation solutions for several H.

    All sweep points share one fine mesh with ``fine_divisions`` per axis;
    H is reported as 1/coarse_divisions.  ``layers`` is "auto"
    (ceil(2 log2(1/H))), an int, or None for the global basis.
    Returns (galerkin_rows, interpolation_rows, layer_per_H).
    """
    if len(coarse_divisions) < 2:
        raise FitError("a convergence sweep needs at least 2 coarse resolutions")
    galerkin, interp, used = [], [], []
    for nc in coarse_divisions:
        ratio = fine_divisions // nc
        k = int(round(math.log2(ratio))) if ratio >= 1 else -1
        if k < 1 or nc * 2**k != fine_divisions:
            raise ConfigurationError(f"fine divisions {fine_divisions} is not coarse divisions "
                                     f"{nc} times a power of two", field="coarse_divisions")
        # vertex numbering depends on the refinement path, so the reference
        # is recomputed on each fine mesh
        coarse, fine, a = prepare(dim, nc, k, coeff)
        ops = NormOps(fine, a)
        u = solve_fine(fine, a, g)
        H = 1.0 / nc
        l = auto_layers(H) if layers == "auto" else layers
        solver = RpsSolver(coarse, fine, a, tol=tol, method=method)
        basis = solver.solve_all(l, workers=workers)
        _, uh = coarse_solve(basis, g, K=ops.Ka)
        uin = interpolate(basis, u.values[fine.coarse_nodes])
        galerkin.append(_row("H", H, ops, u.values - uh.values))
        interp.append(_row("H", H, ops, u.values - uin.values))
        used.append(l)
    return galerkin, interp, used


def write_table(rows, path, columns=None):
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c]
                        for c in columns])
