"""Command-line front end: run solves, eigenreports, and reference suites.

Exit codes: 0 converged, 1 runtime error, 2 max-iters reached,
64 usage / configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import report
from .config import SEED_FUNCTIONS, RunConfig
from .errors import ConfigError, SolverError
from .fem import export_field_csv, read_field_csv
from .fields import Field
from .mesh import build_structured_mesh, nodal_interpolate
from .mpa import run_mpa
from .problems import IndefiniteProblem, SystemProblem, field_max
from .spectral import export_eigs_csv, negative_eigenspace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2
EXIT_USAGE = 64

# Reference characteristics of the bundled experiment suites: converged
# energy with relative tolerance, plus shape checks per run.
REFERENCE_INDEFINITE = (
    # (V, energy, tolerance, dim of negative eigenspace)
    (0.0, 37.89, 0.03, 0),
    (-21.0, 70.43, 0.03, 1),
    (-50.0, 91.42, 0.04, 3),
    (-80.0, 35.06, 0.04, 4),
)
REFERENCE_SYSTEM = (
    # ((mu1, mu2, beta12), energy, tolerance, max_u1 +-10%, max_u2 +-10%)
    ((1.0, 4.0, -1.0), 88.4, 0.05, 8.6, 5.4),
    ((1.0, 4.0, 0.5), 40.4, 0.05, None, None),
    # the third coupling collapses the second component to zero
    ((1.0, 4.0, 1.2), 39.9, 0.05, None, 0.0),
)
_REFERENCE_N = 48


@dataclass
class RunResult:
    config: RunConfig
    problem: object
    solution: Field
    trace: object
    outdir: Path
    summary: str


def build_problem(config: RunConfig, mesh):
    if config.kind == "indefinite":
        return IndefiniteProblem(mesh, config.V, p=config.p)
    return SystemProblem(mesh, np.array(config.mu), np.array(config.beta))


def build_start(config: RunConfig, mesh) -> Field:
    """Initial iterate from a named polynomial seed or a solution CSV."""
    if config.u0 in SEED_FUNCTIONS:
        seed = nodal_interpolate(mesh, SEED_FUNCTIONS[config.u0])
        if config.k == 1:
            return seed
        return Field(mesh, np.repeat(seed.data, config.k, axis=0))
    path = Path(config.u0)
    if not path.exists():
        raise ConfigError(
            f"run.u0 must name a seed ({', '.join(sorted(SEED_FUNCTIONS))}) "
            f"or an existing CSV file, got {config.u0!r}"
        )
    u0 = read_field_csv(mesh, path)
    if u0.k != config.k:
        raise ConfigError(
            f"start file has {u0.k} components, problem needs {config.k}"
        )
    return u0


def _summary_line(problem, solution, trace) -> str:
    last = trace.steps[-1]
    parts = [
        f"status={trace.status}",
        f"grad_norm={last.grad_norm!r}",
        f"steps={trace.iterations}",
        f"energy={last.energy!r}",
    ]
    if problem.kind == "system":
        maxima = field_max(solution)
        parts.extend(
            f"max_u{i + 1}={float(m)!r}" for i, m in enumerate(maxima)
        )
    else:
        parts.append(f"dim_neg={problem.basis.dim}")
    return " ".join(parts)


def execute_run(config: RunConfig) -> RunResult:
    """Build, solve, and write every output of one configured run."""
    mesh = build_structured_mesh(config.n)
    problem = build_problem(config, mesh)
    u0 = build_start(config, mesh)
    solution, trace = run_mpa(problem, problem.cone(), u0, config.mpa)

    outdir = Path(config.output) / f"{config.kind}-{config.config_hash()}"
    outdir.mkdir(parents=True, exist_ok=True)
    export_field_csv(solution, outdir / "solution.csv")
    trace.write_csv(outdir / "trace.csv")
    config.write_effective(outdir / "effective.cfg")
    if config.kind == "indefinite":
        export_eigs_csv(problem.basis, outdir / "eigs.csv")

    summary = _summary_line(problem, solution, trace)
    with open(outdir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write(summary + "\n")
        for note in trace.notes:
            fh.write(f"note={note}\n")

    if config.figures:
        report.render_solution(solution, outdir / "solution.png")
        report.render_trace(trace, outdir / "trace.png")
    return RunResult(config, problem, solution, trace, outdir, summary)


def cmd_solve(args) -> int:
    config = RunConfig.from_file(args.config)
    result = execute_run(config)
    print(result.summary)
    print(f"outputs: {result.outdir}")
    return EXIT_OK if result.trace.status == "converged" else EXIT_MAX_ITERS


def cmd_eig(args) -> int:
    config = RunConfig.from_file(args.config)
    if config.kind != "indefinite":
        raise ConfigError("eig requires problem.kind = indefinite")
    mesh = build_structured_mesh(config.n)
    basis = negative_eigenspace(mesh, config.V,
                                min_count=max(8, config.eig_count))
    outdir = Path(config.output) / f"eig-{config.config_hash()}"
    outdir.mkdir(parents=True, exist_ok=True)
    export_eigs_csv(basis, outdir / "eigs.csv")
    config.write_effective(outdir / "effective.cfg")
    print(f"dim_neg={basis.dim}")
    print(f"outputs: {outdir}")
    return EXIT_OK


def _reference_config(kind: str, output: str, **problem_keys) -> RunConfig:
    if kind == "indefinite":
        return RunConfig(kind="indefinite", n=_REFERENCE_N,
                         V=problem_keys["V"], p=4.0,
                         u0="poly_bump_signed", output=output)
    mu1, mu2, b = problem_keys["params"]
    return RunConfig(kind="system", n=_REFERENCE_N, mu=(mu1, mu2),
                     beta=((0.0, b), (b, 0.0)),
                     u0="poly_bump", output=output)


def _check(label: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'}  {label:<28} {detail}")
    return ok


def cmd_reproduce(args) -> int:
    if args.table == "table1":
        rows = [("indefinite", ref) for ref in REFERENCE_INDEFINITE]
    elif args.table == "table2":
        rows = [("system", ref) for ref in REFERENCE_SYSTEM]
    else:
        print(f"unknown table id {args.table!r} (table1 | table2)",
              file=sys.stderr)
        return EXIT_USAGE

    all_ok = True
    for kind, ref in rows:
        if kind == "indefinite":
            V, e_ref, tol, dim_ref = ref
            config = _reference_config(kind, args.output, V=V)
            label = f"V = {V:g}"
        else:
            params, e_ref, tol, max1_ref, max2_ref = ref
            config = _reference_config(kind, args.output, params=params)
            label = f"(mu1, mu2, beta) = {params}"
        result = execute_run(config)
        last = result.trace.steps[-1]
        energy = last.energy
        ok = result.trace.status == "converged"
        ok &= abs(energy - e_ref) <= tol * e_ref
        detail = (f"energy={energy:.4f} ref={e_ref} (tol {tol:.0%}) "
                  f"grad_norm={last.grad_norm:.2e} steps={result.trace.iterations}")
        if kind == "indefinite":
            dim = result.problem.basis.dim
            ok &= dim == dim_ref
            detail += f" dim_neg={dim} (ref {dim_ref})"
        else:
            maxima = field_max(result.solution)
            detail += f" max_u1={maxima[0]:.3f} max_u2={maxima[1]:.3f}"
            if max1_ref:
                ok &= abs(maxima[0] - max1_ref) <= 0.10 * max1_ref
            if max2_ref:
                ok &= abs(maxima[1] - max2_ref) <= 0.10 * max2_ref
            elif max2_ref == 0.0:
                ok &= maxima[1] <= 1e-3
        all_ok &= _check(label, ok, detail)
    return EXIT_OK if all_ok else EXIT_ERROR


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="peakdescent",
        description="Constrained steepest-descent solver for semilinear "
                    "elliptic problems on the unit square.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one configured solve")
    p_solve.add_argument("config", help="path to a key = value config file")

    p_eig = sub.add_parser("eig", help="eigenvalue report for -Laplace + V")
    p_eig.add_argument("config", help="path to a key = value config file")

    p_rep = sub.add_parser("reproduce",
                           help="run a bundled reference suite")
    p_rep.add_argument("table", help="table1 | table2")
    p_rep.add_argument("--output", default="runs",
                       help="output root directory (default: runs)")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0

    handlers = {"solve": cmd_solve, "eig": cmd_eig, "reproduce": cmd_reproduce}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
