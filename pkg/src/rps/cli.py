"""Command-line runner: ``rps <subcommand> --config file.json``.

Every subcommand writes its artifacts into the configured output directory
and finishes with ``manifest.json`` listing each produced file and its
SHA-256.  Exit codes: 0 success, 1 configuration error, 2 solver error,
3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (NormOps, convergence_table, decay_curve, fit_decay, fit_rate,
                       layer_error_table, named_rhs, prepare, write_table)
from .assembly import mass, stiffness, write_coo
from .basis import RpsSolver, gram, theta
from .config import ExperimentConfig, load_config
from .errors import (CoefficientError, ConditioningError, ConfigurationError,
                     DegenerateSupportError, FitError, MeasurementCoverageError,
                     SolverError, StructuralError)
from .homog import coarse_solve, recover, solve_fine
from .mesh import mesh_norm, write_mesh
from .svgplot import line_plot
from .timedep import CoarseSpace, FineSpace, TimeGrid, solve_parabolic, solve_wave

log = logging.getLogger("rps")

SUBCOMMANDS = ("run", "mesh-info", "basis", "decay", "solve", "wave", "parabolic",
               "recover", "gram")


class Artifacts:
    """Output directory that remembers every file written through it."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.root / name

    def json(self, name, obj):
        with open(self.path(name), "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")

    def table(self, name, rows, columns=None):
        write_table(rows, self.path(name), columns)

    def vector(self, name, values, index=None, header=("node", "value")):
        index = np.arange(len(values)) if index is None else index
        with open(self.path(name), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for k, v in zip(index, values):
                w.writerow([int(k), repr(float(v))])

    def matrix(self, name, A):
        with open(self.path(name), "w", newline="") as f:
            w = csv.writer(f)
            for row in np.asarray(A):
                w.writerow([repr(float(v)) for v in row])

    def manifest(self, cfg: ExperimentConfig, command: str):
        entries = []
        for name in sorted(self.files):
            digest = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
            entries.append({"path": name, "sha256": digest})
        with open(self.root / "manifest.json", "w") as f:
            json.dump({"command": command, "version": __version__, "config": cfg.data,
                       "files": entries}, f, indent=2, sort_keys=True)
            f.write("\n")
        return entries


def _layer_tag(l):
    return "global" if l is None else f"l{l}"


def _plot(out, cfg, name, rows, key, title, xlabel, logx=False):
    if not cfg["outputs"].get("plots", True):
        return
    rows = [r for r in rows if not isinstance(r[key], str)]
    if not rows:
        return
    xs = [r[key] for r in rows]
    series = {n: (xs, [r[f"err_{n}"] for r in rows]) for n in ("L2", "H1", "Linf")}
    line_plot(series, out.path(name), title=title, xlabel=xlabel, ylabel="error", logx=logx)


class Context:
    def __init__(self, cfg: ExperimentConfig, workers: int | None):
        self.cfg = cfg
        self.workers = workers or cfg["workers"]
        self.coarse, self.fine, self.coeffs = prepare(
            cfg.dimension, cfg["coarse_divisions"], cfg["refinements"], cfg.coeff)
        s = cfg.solver
        self.solver = RpsSolver(self.coarse, self.fine, self.coeffs, tol=s["tol"],
                                method=s["method"], max_iter=s["max_iter"])
        self.g = named_rhs(cfg["rhs"], cfg.dimension)
        self._ops = None

    @property
    def ops(self) -> NormOps:
        if self._ops is None:
            self._ops = NormOps(self.fine, self.coeffs)
        return self._ops

    def node(self) -> int:
        node = self.cfg.data.get("node")
        if node is None:
            return self.coarse.nearest_coarse_node([0.5] * self.cfg.dimension)
        if isinstance(node, int):
            if node >= self.coarse.n_coarse:
                raise ConfigurationError(f"index {node} >= {self.coarse.n_coarse} coarse nodes",
                                         field="node")
            return node
        if len(node) != self.cfg.dimension:
            raise ConfigurationError("coordinates do not match the dimension", field="node")
        return self.coarse.nearest_coarse_node(node)

    def build(self, l):
        basis = self.solver.solve_all(l, workers=self.workers)
        worst = max(f.report.get("residual", 0.0) for f in basis.functions)
        log.info("basis %s: %d functions, %d stored nonzeros, max relative residual %.3e",
                 _layer_tag(l), len(basis), basis.stored_nonzeros(), worst)
        return basis

    def common_dumps(self, out):
        dumps = self.cfg["outputs"].get("dumps", [])
        if "mesh" in dumps:
            write_mesh(self.coarse, out.path("mesh_coarse.txt"))
            write_mesh(self.fine, out.path("mesh_fine.txt"))
        if "field" in dumps:
            bary = self.fine.barycenters()
            with open(out.path("field.csv"), "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["cell"] + [f"x{k}" for k in range(self.fine.dim)] + ["value"])
                for t, (b, v) in enumerate(zip(bary, self.coeffs.values)):
                    w.writerow([t] + [repr(float(c)) for c in b] + [repr(float(v))])
        if "matrices" in dumps:
            write_coo(stiffness(self.fine, self.coeffs), out.path("stiffness.coo"))
            write_coo(mass(self.fine, dirichlet=True), out.path("mass.coo"))
            write_coo(self.solver.fv.B, out.path("fv_divergence.coo"))


def cmd_mesh_info(ctx: Context, out: Artifacts):
    c, f = ctx.coarse, ctx.fine
    H = mesh_norm(c.coarse_coordinates(), f)
    info = {
        "dimension": c.dim,
        "coarse": {"vertices": c.n_vertices, "cells": c.n_cells, "coarse_nodes": c.n_coarse},
        "fine": {"vertices": f.n_vertices, "cells": f.n_cells,
                 "interior_vertices": len(f.interior_nodes)},
        "H_mesh_norm": H,
        "h": f.spacing(),
        "lambda_min": ctx.coeffs.lambda_min,
        "lambda_max": ctx.coeffs.lambda_max,
    }
    write_mesh(c, out.path("mesh_coarse.txt"))
    write_mesh(f, out.path("mesh_fine.txt"))
    out.json("mesh_info.json", info)
    print(f"coarse: {c.n_vertices} vertices, {c.n_cells} cells, {c.n_coarse} coarse nodes")
    print(f"fine:   {f.n_vertices} vertices, {f.n_cells} cells")
    print(f"H = {H:.6g}, h = {f.spacing():.6g}")


def _basis_report(out, name, basis):
    rows = []
    for fn in basis.functions:
        r = fn.report
        rows.append({"node": fn.node, "objective": fn.objective, "support_nodes": len(fn.nodes),
                     "nonzeros": fn.nnz, "method": r.get("method"),
                     "unknowns": r.get("unknowns"), "iterations": r.get("iterations"),
                     "residual": r.get("residual")})
    out.table(name, rows)


def cmd_basis(ctx: Context, out: Artifacts):
    i = ctx.node()
    dump_all = "basis" in ctx.cfg["outputs"].get("dumps", [])
    for l in ctx.cfg.layer_list():
        basis = ctx.build(l)
        tag = _layer_tag(l)
        _basis_report(out, f"basis_report_{tag}.csv", basis)
        for fn in basis.functions if dump_all else [basis.functions[i]]:
            out.vector(f"basis_{tag}_node{fn.node}.csv", fn.values, fn.nodes)
    print(f"basis written for layers {ctx.cfg['layers']}")


def cmd_decay(ctx: Context, out: Artifacts):
    layers = [l for l in ctx.cfg.layer_list() if l is not None]
    if not layers:
        raise ConfigurationError("decay needs explicit layer counts (e.g. layers=1..6)",
                                 field="layers")
    i = ctx.node()
    rows, tag = decay_curve(ctx.solver, i, layers, ops=ctx.ops)
    out.table("decay.csv", rows, ["l", "err_L2", "err_H1", "err_Linf"])
    _plot(out, ctx.cfg, "decay.svg", rows, "l", f"basis localization error, node {i}", "layers l")
    fits = {}
    if len(rows) >= 2 and all(r["err_H1"] > 0 for r in rows):
        for n in ("L2", "H1", "Linf"):
            fit = fit_decay([r["l"] for r in rows], [r[f"err_{n}"] for r in rows])
            fits[n] = {"log_rate_per_layer": fit.slope, "ratio_per_layer": math.exp(fit.slope),
                       "fit_residual": fit.residual}
    out.json("decay_fit.json", {"node": i, "reference": tag, "fits": fits})
    for r in rows:
        print(f"l={r['l']:2d}  L2={r['err_L2']:.3e}  H1={r['err_H1']:.3e}  "
              f"Linf={r['err_Linf']:.3e}")


def cmd_solve(ctx: Context, out: Artifacts):
    cfg = ctx.cfg
    sweep = cfg.problem.get("sweep_divisions")
    if sweep:
        L = cfg["layers"]
        layers = None if L == "global" else L if L == "auto" else cfg.layer_list()[0]
        s = cfg.solver
        gal, interp, used = convergence_table(cfg.dimension, cfg.coeff, ctx.g, sweep,
                                              cfg.fine_divisions, layers=layers, tol=s["tol"],
                                              method=s["method"], workers=ctx.workers)
        cols = ["H", "err_L2", "err_H1", "err_Linf"]
        out.table("convergence.csv", gal, cols)
        out.table("interpolation.csv", interp, cols)
        _plot(out, cfg, "convergence.svg", gal, "H", "Galerkin error vs H", "H", logx=True)
        _plot(out, cfg, "interpolation.svg", interp, "H", "interpolation error vs H", "H",
              logx=True)
        rates = {}
        for label, rows in (("galerkin", gal), ("interpolation", interp)):
            rates[label] = {}
            for n in ("L2", "H1", "Linf"):
                fit = fit_rate([r["H"] for r in rows], [r[f"err_{n}"] for r in rows])
                rates[label][n] = {"slope": fit.slope, "fit_residual": fit.residual}
        out.json("rates.json", {"layers_per_H": [_layer_tag(l) for l in used], "rates": rates})
        print(f"H1 slope: galerkin {rates['galerkin']['H1']['slope']:.3f}, "
              f"interpolation {rates['interpolation']['H1']['slope']:.3f}")
        return
    u = solve_fine(ctx.fine, ctx.coeffs, ctx.g)
    layers = [l for l in cfg.layer_list() if l is not None]
    rows = layer_error_table(ctx.solver, ctx.g, layers, reference=u, workers=ctx.workers,
                             ops=ctx.ops)
    out.table("errors.csv", rows, ["l", "err_L2", "err_H1", "err_Linf"])
    _plot(out, cfg, "errors.svg", rows, "l", "coarse solution error vs layers", "layers l")
    if "solution" in cfg["outputs"].get("dumps", []):
        out.vector("solution_fine.csv", u.values)
        last = layers[-1] if layers else None
        _, uh = coarse_solve(ctx.build(last), ctx.g, K=ctx.ops.Ka)
        out.vector(f"solution_{_layer_tag(last)}.csv", uh.values)
    for r in rows:
        print(f"l={r['l']!s:>6}  L2={r['err_L2']:.3e}  H1={r['err_H1']:.3e}  "
              f"Linf={r['err_Linf']:.3e}")


def _time_dependent(ctx: Context, out: Artifacts, kind: str):
    cfg = ctx.cfg
    prob = cfg.problem
    if "T" not in prob:
        raise ConfigurationError(f"{kind} needs a final time", field="problem.T")
    T = prob["T"]
    steps = prob.get("steps", 4 * cfg.fine_divisions)
    grid = TimeGrid(T, steps)
    every = prob.get("snapshot_every", steps)
    rho = prob.get("rho", 1.0)

    def run(space):
        if kind == "wave":
            return solve_wave(space, ctx.g, grid, rho=rho, every=every)
        return solve_parabolic(space, ctx.g, grid, every=every)

    ref = run(FineSpace(ctx.fine, ctx.coeffs))
    rows, last = [], None
    for l in cfg.layer_list():
        traj = run(CoarseSpace(ctx.build(l)))
        e = ref.terminal - traj.terminal
        rows.append({"l": _layer_tag(l) if l is None else l, "err_L2": ctx.ops.l2(e),
                     "err_H1": ctx.ops.h1(e), "err_Linf": float(np.max(np.abs(e)))})
        last = (l, traj)
    out.table(f"{kind}_errors.csv", rows, ["l", "err_L2", "err_H1", "err_Linf"])
    _plot(out, cfg, f"{kind}_errors.svg", rows, "l", f"{kind} error at T={T:g}", "layers l")
    out.vector("terminal_fine.csv", ref.terminal)
    out.vector(f"terminal_{_layer_tag(last[0])}.csv", last[1].terminal)
    if "trajectory" in cfg["outputs"].get("dumps", []):
        with open(out.path("trajectory.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "node", "value"])
            for t, vec in zip(last[1].times, last[1].values):
                for k, v in enumerate(vec):
                    w.writerow([repr(float(t)), k, repr(float(v))])
    for r in rows:
        print(f"l={r['l']!s:>6}  L2={r['err_L2']:.3e}  H1={r['err_H1']:.3e}  "
              f"Linf={r['err_Linf']:.3e}")


def cmd_wave(ctx, out):
    _time_dependent(ctx, out, "wave")


def cmd_parabolic(ctx, out):
    _time_dependent(ctx, out, "parabolic")


def read_measurements(path) -> dict:
    """CSV with header ``node,value``; node is the coarse-node index."""
    out = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"node", "value"} <= set(reader.fieldnames):
            raise ConfigurationError("measurement file needs columns node,value",
                                     field="problem.measurements")
        for row in reader:
            out[int(row["node"])] = float(row["value"])
    return out


def cmd_recover(ctx: Context, out: Artifacts):
    prob = ctx.cfg.problem
    if "measurements" not in prob:
        raise ConfigurationError("missing measurement file", field="problem.measurements")
    meas = read_measurements(ctx.cfg.resolve(prob["measurements"]))
    l = ctx.cfg.layer_list()[0]
    basis = ctx.build(l)
    sol, report = recover(basis, meas, M=prob.get("M"))
    out.vector("recovery.csv", sol.values)
    report["layers"] = _layer_tag(l)
    out.json("recovery_report.json", report)
    print(report["bound"])


def cmd_gram(ctx: Context, out: Artifacts):
    basis = ctx.build(None)
    P = gram(basis, ctx.solver.Q)
    T = theta(P)
    out.matrix("P.csv", P)
    out.matrix("Theta.csv", T)
    eig = np.linalg.eigvalsh(P)
    report = {"n": len(P), "min_eigenvalue": float(eig[0]), "max_eigenvalue": float(eig[-1]),
              "condition": float(eig[-1] / eig[0]),
              "max_abs_P_Theta_minus_I": float(np.abs(P @ T - np.eye(len(P))).max())}
    out.json("gram_report.json", report)
    print(f"P: {len(P)}x{len(P)}, condition {report['condition']:.3e}, "
          f"|P Theta - I|_max = {report['max_abs_P_Theta_minus_I']:.2e}")


COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "basis": cmd_basis,
    "decay": cmd_decay,
    "solve": cmd_solve,
    "wave": cmd_wave,
    "parabolic": cmd_parabolic,
    "recover": cmd_recover,
    "gram": cmd_gram,
}

RUN_DISPATCH = {"elliptic": "solve", "wave": "wave", "parabolic": "parabolic",
                "basis-only": "basis", "recover": "recover"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="rps", description="Rough polyharmonic spline experiments.")
    p.add_argument("--version", action="version", version=f"rps {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                           parser_class=_Parser)
    sub.required = True
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        if name == "run":
            sp.add_argument("config_path", nargs="?", help="experiment config (JSON)")
            sp.add_argument("--config", dest="config_flag")
        else:
            sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--workers", type=int, default=None)
    return p


def execute(command: str, cfg: ExperimentConfig, workers=None) -> Path:
    """Run one subcommand for a loaded config; returns the output directory."""
    if command == "run":
        command = RUN_DISPATCH[cfg.problem["type"]]
    out = Artifacts(cfg.output_dir())
    handler = logging.FileHandler(out.path("run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("rps")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        log.info("command %s, config %s", command, cfg.name)
        ctx = Context(cfg, workers)
        ctx.common_dumps(out)
        COMMANDS[command](ctx, out)
    finally:
        root.removeHandler(handler)
        handler.close()
    out.manifest(cfg, command)
    return out.root


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = getattr(args, "config", None)
        if args.command == "run":
            path = args.config_path or args.config_flag
            if path is None:
                raise ConfigurationError("a config path is required", field="--config")
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("must be >= 1", field="--workers")
        cfg = load_config(path, args.override)
        root = execute(args.command, cfg, args.workers)
        print(f"artifacts in {root}", file=sys.stderr)
        return 0
    except (ConfigurationError, CoefficientError, MeasurementCoverageError, FitError,
            StructuralError) as exc:
        print(f"rps: configuration error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, ConditioningError, DegenerateSupportError) as exc:
        print(f"rps: solver error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"rps: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
