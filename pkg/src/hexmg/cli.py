"""Command-line entry points: ``solve``, ``study-accuracy``, ``study-performance``, ``verify``.

Exit status: 0 success, 1 solver failure (or failed verification), 2 bad
configuration, 3 I/O error.
"""

import argparse
from contextlib import ExitStack
import json
import logging
import math
from pathlib import Path
import sys

from . import studies
from .config import load_config
from .errors import ConfigError, HexmgError, SolverError
from .material import set_jacobian_perturbation
from .parallel import limit_blas_threads, num_threads

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("hexmg")


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return v


class JsonLog:
    """Writes one JSON object per line to a file and to stdout."""

    def __init__(self, path, stream=None):
        self.fh = open(path, "w", encoding="utf-8")
        self.stream = stream

    def __call__(self, rec):
        line = json.dumps({k: _jsonable(v) for k, v in rec.items()}, sort_keys=True)
        self.fh.write(line + "\n")
        self.fh.flush()
        if self.stream is not None:
            print(line, file=self.stream, flush=True)

    def close(self):
        self.fh.close()


def _validate(cfg):
    """Build the cheap problem pieces so bad values surface as config errors."""
    try:
        cfg.material()
        cfg.boundary_conditions()
        cfg.mesh()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _prepare(args):
    cfg = load_config(args.config)
    _validate(cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def cmd_solve(args):
    cfg, out = _prepare(args)
    jl = JsonLog(out / "iterations.jsonl", sys.stdout)
    try:
        op, u, row = studies.solve_case(cfg, callback=jl)
    finally:
        jl.close()
    studies.write_csv(out / "summary.csv", studies.SOLVE_COLUMNS, [row])
    if cfg.vtk:
        from .vtk import write_vtk
        write_vtk(out / cfg.vtk, op.mesh, u, title=f"hexmg {cfg.case_id}")
    log.info("case %s: %d dofs, psi = %.10g, %d Newton its, %d CG its",
             row["case_id"], row["dofs"], row["psi"], row["newton_its"], row["cg_its"])
    return EXIT_OK


def cmd_study_accuracy(args):
    cfg, out = _prepare(args)
    jl = JsonLog(out / "iterations.jsonl")
    try:
        rows, targets, ref = studies.run_accuracy_study(cfg, callback=jl)
    finally:
        jl.close()
    studies.write_csv(out / "accuracy.csv", studies.ACCURACY_COLUMNS, rows)
    studies.write_csv(out / "accuracy_target.csv", studies.TARGET_COLUMNS, targets)
    print(f"reference {ref['case_id']}: dofs={ref['dofs']} psi={ref['psi']!r}")
    for r in rows:
        print(f"{r['case_id']}: order={r['order']} dofs={r['dofs']} rel_error={r['rel_error']:.3e}"
              f"{' pareto' if r['pareto'] else ''}")
    for t in targets:
        print(f"order {t['order']}: dofs to reach {t['target_error']:g} = {t['dofs_required']}")
    return EXIT_OK


def cmd_study_performance(args):
    cfg, out = _prepare(args)
    rows = studies.run_performance_study(cfg)
    studies.write_csv(out / "performance.csv", studies.PERFORMANCE_COLUMNS, rows)
    for r in rows:
        print(f"{r['case_id']} {r['representation']}: {r['status']} dofs={r['dofs']} "
              f"bytes/dof={r['bytes_per_dof']:.1f} dof/s={r['dof_per_s']:.3g}")
    return EXIT_OK


def cmd_verify(args):
    from .verify import format_table, run_checks
    if args.perturb_jacobian:
        set_jacobian_perturbation(args.perturb_jacobian)
    try:
        results = run_checks()
    finally:
        set_jacobian_perturbation(0.0)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hexmg", description="Matrix-free high-order hyperelasticity with p-multigrid.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "solve": (cmd_solve, "solve one configured problem"),
        "study-accuracy": (cmd_study_accuracy, "strain-energy error versus DoFs"),
        "study-performance": (cmd_study_performance, "Jacobian apply throughput and storage"),
        "verify": (cmd_verify, "run the invariant suite"),
    }
    for name, (fn, help_) in commands.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=name != "verify", help="flat key = value file")
        p.add_argument("--output", default="hexmg-output", help="directory for artifacts")
        p.add_argument("--threads", type=int, default=None, help="threads for operator work")
        p.add_argument("--deterministic", action="store_true",
                       help="pin BLAS threads to one for bit-reproducible output")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--perturb-jacobian", type=float, default=0.0, metavar="EPS",
                           help=argparse.SUPPRESS)
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    threads, deterministic = args.threads, args.deterministic
    if args.config:
        try:
            cfg = load_config(args.config)
            threads = threads or cfg.threads
            deterministic = deterministic or cfg.deterministic
        except (ConfigError, OSError):
            pass  # reported by the command itself
    try:
        with ExitStack() as stack:
            if deterministic:
                limits = limit_blas_threads(1)
                if limits is not None:
                    stack.enter_context(limits)
            stack.enter_context(num_threads(threads or 1))
            return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure in phase {exc.phase or 'unknown'}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HexmgError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
