"""Newton-CG and L-BFGS with a critical-point line search, plus load continuation."""

from collections import deque
from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .errors import (IndefiniteOperatorError, InvertedElementError, LineSearchError,
                     NotSPDError, SolverError)
from .krylov import cg_solve
from .multigrid import build_hierarchy

log = logging.getLogger(__name__)

SOLVERS = ("newton-cg", "lbfgs")
LINE_SEARCHES = ("critical-point", "none")


@dataclass
class NewtonConfig:
    max_it: int = 50
    rtol: float = 1e-8
    atol: float = 1e-10
    linear_rtol: float = 1e-3
    cg_max_it: int = 500
    line_search: str = "critical-point"
    load_steps: int = 1
    schedule: tuple = None
    lbfgs_memory: int = 5
    lbfgs_refresh: int = 1

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.linear_rtol > 0):
            raise ValueError("tolerances must be positive")
        if self.load_steps < 1:
            raise ValueError("load_steps must be >= 1")
        if self.line_search not in LINE_SEARCHES:
            raise ValueError(f"line_search must be one of {LINE_SEARCHES}")
        if self.lbfgs_memory < 0 or self.lbfgs_refresh < 1:
            raise ValueError("lbfgs_memory must be >= 0 and lbfgs_refresh >= 1")


@dataclass
class SolveReport:
    """Outcome of one nonlinear solve (one load step)."""

    converged: bool = False
    iterations: int = 0
    cg_iterations: int = 0
    jacobian_applies: int = 0
    residual_norms: list = field(default_factory=list)
    records: list = field(default_factory=list)
    setup_time: float = 0.0
    solve_time: float = 0.0


def critical_point_line_search(op, u, du, F0=None, clamp=(0.1, 2.0), max_halvings=5):
    """Step length from one secant step on ``g(a) = F(u + a du)^T du``.

    Samples ``g(0)`` and ``g(t)`` with ``t = 1`` halved while the trial point
    inverts an element. Returns ``(alpha, info)``.
    """
    if F0 is None:
        F0 = op.residual(u, store=False)
    g0 = float(F0 @ du)
    t = 1.0
    g1 = None
    for _ in range(max_halvings + 1):
        try:
            g1 = float(op.residual(u + t * du, store=False) @ du)
        except InvertedElementError:
            g1 = None
        if g1 is not None and np.isfinite(g1):
            break
        g1 = None
        t *= 0.5
    if g1 is None:
        raise LineSearchError(f"residual not finite along the search direction after {max_halvings} halvings")
    info = {"g0": g0, "g1": g1, "trial": t}
    if g0 >= 0:
        log.warning("search direction is not a descent direction (g(0)=%.3e); taking full step", g0)
        return t, info
    if g1 == g0:
        return t, info
    alpha = t * g0 / (g0 - g1)
    alpha = float(np.clip(alpha, clamp[0], clamp[1]))
    if t < 1.0:
        alpha = min(alpha, t)
    return alpha, info


def _accept_step(op, u, du, alpha, max_halvings=5):
    """Evaluate the residual at the accepted point, backing off on inversion."""
    for _ in range(max_halvings + 1):
        try:
            un = u + alpha * du
            return un, op.residual(un), alpha
        except InvertedElementError:
            alpha *= 0.5
    raise SolverError("step rejected: inverted elements persist after backtracking", phase="line-search")


def _converged(fn, f0, cfg):
    return fn <= cfg.atol or fn <= cfg.rtol * f0


def newton_solve(op, u0=None, config=None, callback=None):
    """Newton's method with CG preconditioned by a p-multigrid V-cycle.

    Each linear system is solved to ``config.linear_rtol`` in the natural norm.
    ``callback`` receives one record dict per iteration.
    """
    cfg = config or NewtonConfig()
    u = op.lift(np.zeros(op.n_dofs) if u0 is None else u0)
    rep = SolveReport()
    F = op.residual(u)
    f0 = float(np.linalg.norm(F))
    rep.residual_norms.append(f0)
    for it in range(cfg.max_it):
        fn = rep.residual_norms[-1]
        if _converged(fn, f0, cfg):
            rep.converged = True
            break
        t0 = time.perf_counter()
        jac = op.jacobian()
        try:
            mg = build_hierarchy(op, jac, cfg.schedule)
        except NotSPDError as exc:
            raise SolverError(str(exc), phase="preconditioner-setup") from exc
        t1 = time.perf_counter()
        try:
            du, cg = cg_solve(jac, -F, M=mg, rtol=cfg.linear_rtol, maxits=cfg.cg_max_it)
        except IndefiniteOperatorError as exc:
            raise SolverError(str(exc), phase="linear-solve") from exc
        if cfg.line_search == "critical-point":
            alpha, _ = critical_point_line_search(op, u, du, F)
        else:
            alpha = 1.0
        u, F, alpha = _accept_step(op, u, du, alpha)
        t2 = time.perf_counter()
        rep.setup_time += t1 - t0
        rep.solve_time += t2 - t1
        rep.iterations = it + 1
        rep.cg_iterations += cg.iterations
        rep.jacobian_applies += jac.apply_count
        fn = float(np.linalg.norm(F))
        rep.residual_norms.append(fn)
        rec = {"iteration": it + 1, "residual_norm": fn, "cg_iterations": cg.iterations,
               "cg_converged": cg.converged, "condition": cg.condition, "alpha": alpha}
        rep.records.append(rec)
        if callback is not None:
            callback(rec)
    else:
        rep.converged = _converged(rep.residual_norms[-1], f0, cfg)
    return u, rep


def lbfgs_solve(op, u0=None, config=None, callback=None, memory=None, refresh=None):
    """L-BFGS whose initial inverse Hessian is a p-multigrid V-cycle.

    The V-cycle is rebuilt from the current linearization every ``refresh``
    iterations and reused (lagged) in between.
    """
    cfg = config or NewtonConfig()
    m = cfg.lbfgs_memory if memory is None else memory
    k_refresh = cfg.lbfgs_refresh if refresh is None else refresh
    u = op.lift(np.zeros(op.n_dofs) if u0 is None else u0)
    rep = SolveReport()
    F = op.residual(u)
    f0 = float(np.linalg.norm(F))
    rep.residual_norms.append(f0)
    pairs = deque(maxlen=max(m, 1))
    H0, fine_ops = None, []
    for it in range(cfg.max_it):
        if _converged(rep.residual_norms[-1], f0, cfg):
            rep.converged = True
            break
        t0 = time.perf_counter()
        if H0 is None or it % k_refresh == 0:
            jac = op.jacobian()
            try:
                H0 = build_hierarchy(op, jac, cfg.schedule)
            except NotSPDError as exc:
                raise SolverError(str(exc), phase="preconditioner-setup") from exc
            fine_ops.append(jac)
        t1 = time.perf_counter()
        q = F.copy()
        coeffs = []
        for s, y, rho in reversed(pairs):
            a = rho * float(s @ q)
            q -= a * y
            coeffs.append(a)
        r = H0(q)
        for (s, y, rho), a in zip(pairs, reversed(coeffs)):
            b = rho * float(y @ r)
            r += (a - b) * s
        d = -r
        d[op.mask] = 0.0
        if cfg.line_search == "critical-point":
            alpha, _ = critical_point_line_search(op, u, d, F)
        else:
            alpha = 1.0
        un, Fn, alpha = _accept_step(op, u, d, alpha)
        s, y = un - u, Fn - F
        sy = float(s @ y)
        if m > 0 and sy > 0:
            pairs.append((s, y, 1.0 / sy))
        u, F = un, Fn
        rep.setup_time += t1 - t0
        rep.solve_time += time.perf_counter() - t1
        rep.iterations = it + 1
        fn = float(np.linalg.norm(F))
        rep.residual_norms.append(fn)
        rec = {"iteration": it + 1, "residual_norm": fn, "cg_iterations": 0,
               "cg_converged": True, "condition": float("nan"), "alpha": alpha}
        rep.records.append(rec)
        if callback is not None:
            callback(rec)
    else:
        rep.converged = _converged(rep.residual_norms[-1], f0, cfg)
    rep.jacobian_applies = sum(j.apply_count for j in fine_ops)
    return u, rep


_RECOVERABLE = (SolverError, LineSearchError, InvertedElementError, IndefiniteOperatorError,
                NotSPDError)


def load_continuation(op, steps=None, solver="newton-cg", config=None, u0=None, callback=None,
                      max_bisections=3):
    """Ramp loads with ``t_k = k / N`` and solve each step warm-started.

    A failed step is bisected up to ``max_bisections`` times.

    Returns
    -------
    u : ndarray
    reports : list of (t, SolveReport)
    """
    cfg = config or NewtonConfig()
    N = cfg.load_steps if steps is None else int(steps)
    if N < 1:
        raise ValueError("need at least one load step")
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {SOLVERS}")
    solve = newton_solve if solver == "newton-cg" else lbfgs_solve
    reports = []

    def attempt(t_from, t_to, u_from, depth):
        op.load_scale = t_to

        def cb(rec):
            if callback is not None:
                callback(dict(rec, load=t_to))

        try:
            u, rep = solve(op, u_from, cfg, callback=cb)
            if not rep.converged:
                raise SolverError(f"no convergence in {rep.iterations} iterations at t={t_to:g}",
                                  phase="nonlinear-solve")
        except _RECOVERABLE as exc:
            if depth >= max_bisections:
                phase = getattr(exc, "phase", None) or "nonlinear-solve"
                raise SolverError(f"load step to t={t_to:g} failed: {exc}", phase=phase) from exc
            t_mid = 0.5 * (t_from + t_to)
            log.info("bisecting load step [%g, %g]", t_from, t_to)
            u_mid = attempt(t_from, t_mid, u_from, depth + 1)
            return attempt(t_mid, t_to, u_mid, depth + 1)
        reports.append((t_to, rep))
        return u

    u = np.zeros(op.n_dofs) if u0 is None else np.asarray(u0, dtype=float)
    t = 0.0
    for k in range(1, N + 1):
        tk = k / N
        u = attempt(t, tk, u, 0)
        t = tk
    return u, reports
