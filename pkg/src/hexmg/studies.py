"""Problem setup, single solves and the accuracy/throughput studies behind the CLI."""

import csv
import logging
import math
import time

import numpy as np

from .assembly import coo_symbolic, coo_values
from .errors import ConfigError, InvertedElementError, SolverError
from .krylov import cg_solve, rough_seed
from .nonlinear import load_continuation
from .operator import HyperelasticOperator

log = logging.getLogger(__name__)

SOLVE_COLUMNS = ("case_id", "order", "refinement", "dofs", "psi", "rel_error", "newton_its",
                 "cg_its", "cond_min", "cond_max", "wall_setup", "wall_solve", "dof_per_s",
                 "bytes_per_dof")
ACCURACY_COLUMNS = SOLVE_COLUMNS + ("pareto",)
PERFORMANCE_COLUMNS = ("case_id", "order", "refinement", "representation", "dofs", "status",
                       "stored_bytes", "bytes_per_dof", "nnz_per_row", "repeats", "apply_time",
                       "dof_per_s")
TARGET_COLUMNS = ("order", "target_error", "dofs_required")
# columns that depend on wall-clock measurements and are excluded from determinism checks
TIMING_COLUMNS = frozenset({"wall_setup", "wall_solve", "dof_per_s", "apply_time"})

# bytes per COO entry during assembly: row, col, plan and value arrays
_COO_ENTRY_BYTES = 32


def build_operator(cfg, order=None, refinement=None):
    mesh = cfg.mesh(order, refinement)
    bf = cfg.body_force if any(cfg.body_force) else None
    return HyperelasticOperator(mesh, cfg.material(), cfg.boundary_conditions(), variant=cfg.variant,
                                q=cfg.quadrature, geometry_order=cfg.geometry_order, body_force=bf)


def solve_case(cfg, case_id=None, order=None, refinement=None, callback=None):
    """Solve one configured problem by load continuation.

    Returns
    -------
    op : HyperelasticOperator
    u : ndarray
    row : dict
        One :data:`SOLVE_COLUMNS` record (``rel_error`` left as NaN).
    """
    order = cfg.order if order is None else order
    refinement = cfg.refinement if refinement is None else refinement
    case_id = cfg.case_id if case_id is None else case_id
    op = build_operator(cfg, order, refinement)
    ncfg = cfg.newton_config()
    if order != cfg.order:
        ncfg.schedule = None

    def cb(rec):
        if callback is not None:
            callback(dict(rec, case_id=case_id))

    u, reports = load_continuation(op, solver=cfg.solver, config=ncfg, callback=cb)
    reps = [r for _, r in reports]
    conds = [rec["condition"] for r in reps for rec in r.records if np.isfinite(rec["condition"])]
    setup = sum(r.setup_time for r in reps)
    solve = sum(r.solve_time for r in reps)
    newton = sum(r.iterations for r in reps)
    op.residual(u)
    row = {
        "case_id": case_id, "order": order, "refinement": refinement, "dofs": op.n_dofs,
        "psi": op.strain_energy(u), "rel_error": float("nan"), "newton_its": newton,
        "cg_its": sum(r.cg_iterations for r in reps),
        "cond_min": min(conds) if conds else float("nan"),
        "cond_max": max(conds) if conds else float("nan"),
        "wall_setup": setup, "wall_solve": solve,
        "dof_per_s": op.n_dofs * newton / (setup + solve) if setup + solve > 0 else float("nan"),
        "bytes_per_dof": op.jacobian().stored_bytes() / op.n_dofs,
    }
    return op, u, row


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- accuracy ------------------------------------------------------------------------


def pareto_front(rows):
    """Flag rows not dominated in (dofs, rel_error) by any other row."""
    flags = []
    for r in rows:
        dominated = any(
            s is not r and s["dofs"] <= r["dofs"] and s["rel_error"] <= r["rel_error"]
            and (s["dofs"] < r["dofs"] or s["rel_error"] < r["rel_error"])
            for s in rows)
        flags.append(not dominated)
    return flags


def dofs_to_target(rows, order, target):
    """Smallest DoF count among cases of ``order`` whose error is within ``target``.

    ``inf`` when no case of that order reaches the target.
    """
    hits = [r["dofs"] for r in rows if r["order"] == order and r["rel_error"] <= target]
    return min(hits) if hits else math.inf


def run_accuracy_study(cfg, callback=None):
    """Solve the reference and every case; returns ``(rows, targets, reference_row)``."""
    if cfg.reference is None:
        raise ConfigError("reference: the accuracy study needs an overkill reference case",
                          key="reference")
    if not cfg.cases:
        raise ConfigError("cases: the accuracy study needs at least one case", key="cases")
    ids = [c[0] for c in cfg.cases] + [cfg.reference[0]]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ConfigError(f"cases: duplicate case ids {', '.join(dup)}", key="cases")
    rid, rp, rr = cfg.reference
    try:
        _, _, ref = solve_case(cfg, rid, rp, rr, callback)
    except SolverError as exc:
        raise SolverError(f"reference case {rid!r} failed: {exc}", phase=exc.phase) from exc
    psi_ref = ref["psi"]
    rows = []
    for cid, p, r in cfg.cases:
        try:
            _, _, row = solve_case(cfg, cid, p, r, callback)
        except SolverError as exc:
            log.warning("case %s failed (%s); omitted from the table", cid, exc)
            continue
        row["rel_error"] = abs(row["psi"] - psi_ref) / abs(psi_ref) if psi_ref != 0 else float("nan")
        rows.append(row)
    for row, flag in zip(rows, pareto_front(rows)):
        row["pareto"] = flag
    ref["rel_error"] = 0.0
    targets = [{"order": p, "target_error": cfg.target_error,
                "dofs_required": dofs_to_target(rows, p, cfg.target_error)}
               for p in sorted({r["order"] for r in rows})]
    return rows, targets, ref


# -- throughput ------------------------------------------------------------------------


def performance_cases(cfg):
    """``(case_id, order, refinement)`` for every order on the shared lattice ladder."""
    out = []
    for L in cfg.dof_ladder:
        for p in cfg.orders:
            if L % p:
                raise ConfigError(f"dof_ladder: entry {L} is not divisible by order {p}",
                                  key="dof_ladder")
            out.append((f"q{p}-l{L}", p, L // p))
    return out


def _preload(op):
    """Discarded warm-up: a crude Jacobi-CG Newton step from the lifted zero state."""
    u = op.zero_state()
    F = op.residual(u)
    jac = op.jacobian()
    inv = 1.0 / jac.diagonal()
    du, _ = cg_solve(jac, -F, M=lambda r: inv * r, rtol=1e-1, maxits=20)
    try:
        op.residual(u + du)
    except InvertedElementError:
        op.residual(u)
    return op.jacobian()


def _time_applies(fn, x, warmup, repeats):
    for _ in range(warmup):
        fn(x)
    t0 = time.perf_counter()
    for _ in range(repeats):
        y = fn(x)
    return time.perf_counter() - t0, y


def run_performance_study(cfg, callback=None):
    rows = []
    for cid, p, r in performance_cases(cfg):
        op = build_operator(cfg, p, r)
        jac = _preload(op)
        n = op.n_dofs
        x = rough_seed(n, op.mask)
        for rep in cfg.representations:
            row = {"case_id": cid, "order": p, "refinement": r, "representation": rep,
                   "dofs": n, "status": "ok", "stored_bytes": float("nan"),
                   "bytes_per_dof": float("nan"), "nnz_per_row": float("nan"),
                   "repeats": cfg.repeats, "apply_time": float("nan"), "dof_per_s": float("nan")}
            try:
                if rep == "matrix-free":
                    stored = jac.stored_bytes()
                    t, _ = _time_applies(jac.apply, x, cfg.warmup, cfg.repeats)
                else:
                    m = 3 * op.restriction.elem_size
                    estimate = _COO_ENTRY_BYTES * op.restriction.n_elements * m * m
                    if estimate > cfg.max_assembled_bytes:
                        raise MemoryError(f"assembly needs about {estimate:.3g} bytes")
                    template = coo_symbolic(jac)
                    A = template.fill(coo_values(jac, template))
                    stored = A.data.nbytes + A.indices.nbytes + A.indptr.nbytes
                    row["nnz_per_row"] = A.nnz / n
                    t, _ = _time_applies(lambda v: A @ v, x, cfg.warmup, cfg.repeats)
                row.update(stored_bytes=stored, bytes_per_dof=stored / n, apply_time=t,
                           dof_per_s=n * cfg.repeats / t if t > 0 else float("inf"))
            except MemoryError as exc:
                log.warning("case %s/%s failed: %s", cid, rep, exc)
                row["status"] = "failed:out-of-memory"
            rows.append(row)
            if callback is not None:
                callback(dict(row))
    return rows

