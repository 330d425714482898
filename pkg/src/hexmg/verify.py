"""Self-contained invariant checks run by ``hexmg verify``."""

from dataclasses import dataclass
import time

import numpy as np

from .assembly import assemble, coo_symbolic
from .basis import (apply_grad, apply_grad_transpose, apply_interp, apply_interp_transpose,
                    build_lagrange_basis, dense_grad, dense_interp)
from .dual import Dual
from .krylov import ChebyshevSmoother, estimate_lambda_max
from .material import NeoHookean, _dS_analytic, second_piola, second_piola_dual
from .mesh import BoundaryCondition, build_box_mesh, build_restriction
from .multigrid import Prolongation, build_hierarchy
from .operator import HyperelasticOperator

MATERIAL = NeoHookean(mu=1.0, lam=1.5)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0
    error: str = ""


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _problem(p=2, counts=(2, 2, 2), traction=(0.0, 0.02, 0.01), variant="current"):
    affine = np.array([[1.0, 0.1, 0.0], [0.0, 0.9, 0.05], [0.02, 0.0, 1.1]])
    mesh = build_box_mesh((1.0, 1.0, 1.0), counts, p, affine=affine)
    bcs = [BoundaryCondition("-x", "dirichlet", (0.0, 0.0, 0.0)),
           BoundaryCondition("+x", "traction", traction)]
    return HyperelasticOperator(mesh, MATERIAL, bcs, variant=variant)


def smooth_state(op, seed, amp=0.05):
    """Lifted smooth random displacement: affine plus a sine mode plus small noise."""
    rng = np.random.default_rng(seed)
    X = op.mesh.coords
    u = X @ (amp * rng.standard_normal((3, 3))).T
    u += 0.5 * amp * np.sin(np.pi * X @ rng.uniform(0.5, 1.5, 3))[:, None] * rng.standard_normal(3)
    u += 0.01 * amp * rng.standard_normal(u.shape)
    return op.lift(u.ravel())


def check_sum_factorization():
    err = 0.0
    rng = np.random.default_rng(1)
    for p in (1, 2, 3):
        b = build_lagrange_basis(p)
        u = rng.standard_normal((2, 3, b.P ** 3))
        Bi, G = dense_interp(b), dense_grad(b)
        err = max(err, _rel(apply_interp(b, u), np.einsum("qi,eci->ecq", Bi, u)))
        err = max(err, _rel(apply_grad(b, u), np.einsum("dqi,eci->ecdq", G, u)))
    return err, 1e-12


def check_basis_adjoints():
    err = 0.0
    rng = np.random.default_rng(2)
    for p in (1, 2, 3):
        b = build_lagrange_basis(p)
        u = rng.standard_normal((2, 3, b.P ** 3))
        v = rng.standard_normal((2, 3, b.Q ** 3))
        g = rng.standard_normal((2, 3, 3, b.Q ** 3))
        lhs = np.sum(apply_interp(b, u) * v)
        err = max(err, abs(lhs - np.sum(u * apply_interp_transpose(b, v))) / abs(lhs))
        lhs = np.sum(apply_grad(b, u) * g)
        err = max(err, abs(lhs - np.sum(u * apply_grad_transpose(b, g))) / abs(lhs))
    return err, 1e-12


def check_assembled_equivalence():
    op = _problem()
    op.residual(smooth_state(op, 3))
    jac = op.jacobian()
    A = assemble(jac)
    rng = np.random.default_rng(4)
    err = max(_rel(A @ x, jac.apply(x)) for x in rng.standard_normal((5, op.n_dofs)))
    return err, 1e-12


def _fd_error(op, seed, eps=1e-6):
    u = smooth_state(op, seed)
    op.residual(u)
    jac = op.jacobian()
    du = np.random.default_rng(seed + 100).standard_normal(op.n_dofs)
    du[op.mask] = 0.0
    fd = (op.residual(u + eps * du, store=False) - op.residual(u - eps * du, store=False)) / (2 * eps)
    return _rel(jac.apply(du), fd)


def check_jacobian_fd():
    op = _problem(p=2, counts=(2, 1, 1))
    return max(_fd_error(op, s) for s in range(3)), 1e-6


def check_initial_variants_fd():
    err = 0.0
    for v in ("initial-native", "initial-tuned", "initial-ad"):
        err = max(err, _fd_error(_problem(p=2, counts=(1, 1, 1), variant=v), 7))
    return err, 1e-6


def check_dual_ad():
    rng = np.random.default_rng(5)
    H = 0.1 * rng.standard_normal((4, 3, 3))
    F = np.eye(3) + H
    C = np.swapaxes(F, -1, -2) @ F
    E = 0.5 * (C - np.eye(3))
    dE = rng.standard_normal((4, 3, 3))
    dE = 0.5 * (dE + np.swapaxes(dE, -1, -2))
    S = second_piola_dual(MATERIAL, Dual(E, dE))
    Cinv = np.linalg.inv(C)
    exact = _dS_analytic(MATERIAL, Cinv, MATERIAL.lam * np.log(np.linalg.det(F)), dE)
    return max(_rel(S.value, second_piola(MATERIAL, H)), _rel(S.deriv, exact)), 1e-12


def check_energy_gradient():
    op = _problem(p=2, counts=(2, 1, 1))
    u = smooth_state(op, 8)
    F = op.residual(u)
    du = np.random.default_rng(9).standard_normal(op.n_dofs)
    du[op.mask] = 0.0
    h = 1e-5
    fd = (op.potential_energy(u + h * du) - op.potential_energy(u - h * du)) / (2 * h)
    return abs(fd - F @ du) / abs(F @ du), 1e-6


def _galerkin_error(p, schedule):
    op = _problem(p=p, counts=(2, 1, 1))
    op.residual(smooth_state(op, 10, amp=0.02))
    h = build_hierarchy(op, schedule=schedule)
    rng = np.random.default_rng(11)
    err = 0.0
    for fine, coarse in zip(h.levels, h.levels[1:]):
        P = fine.prolongation
        x = rng.standard_normal(P.shape[1])
        x[coarse.mask] = 0.0
        lhs = coarse.operator.apply_unmasked(x)
        rhs = P.restrict(fine.operator.apply_unmasked(P.prolong(x)))
        lhs[coarse.mask] = rhs[coarse.mask] = 0.0
        err = max(err, _rel(lhs, rhs))
    return err


def check_galerkin():
    return max(_galerkin_error(2, (2, 1)), _galerkin_error(3, (3, 2, 1))), 1e-12


def check_prolongation_adjoint():
    mesh = build_box_mesh((1, 1, 1), (2, 2, 1), 3)
    Rf, Rc = build_restriction(mesh), build_restriction(mesh.with_order(1))
    P = Prolongation(Rc, Rf, 1, 3)
    rng = np.random.default_rng(12)
    xc, xf = rng.standard_normal(P.shape[1]), rng.standard_normal(P.shape[0])
    lhs = xf @ P.prolong(xc)
    return abs(lhs - xc @ P.restrict(xf)) / abs(lhs), 1e-12


def check_storage_counts():
    counts = []
    for v in ("current", "initial-native", "initial-tuned"):
        op = _problem(p=1, counts=(1, 1, 1), variant=v)
        op.residual(op.zero_state())
        counts.append(op.state_scalars_per_point())
    return float(np.abs(np.array(counts) - [17, 19, 26]).sum()), 0.0


def check_q1_sparsity():
    mesh = build_box_mesh((1, 1, 1), (2, 2, 2), 1)
    op = HyperelasticOperator(mesh, MATERIAL, [])
    op.residual(op.zero_state())
    t = coo_symbolic(op.jacobian())
    centre = 13  # middle vertex of the 3x3x3 lattice
    row = 3 * centre
    cols = t.indices[t.indptr[row]:t.indptr[row + 1]]
    return float(abs(len(np.unique(cols // 3)) - 27)), 0.0


def check_lanczos():
    d = np.arange(1.0, 51.0)
    est = estimate_lambda_max(lambda x: d * x, n=50, iterations=10)
    return abs(est - 50.0) / 50.0, 0.05


def check_chebyshev():
    rng = np.random.default_rng(13)
    n = 60
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q @ np.diag(np.linspace(0.05, 4.0, n)) @ Q.T + 2.0 * np.eye(n)
    diag = np.diag(A).copy()
    sm = ChebyshevSmoother.calibrate(A, diag)
    x = rng.standard_normal(n)
    fixed = _rel(sm.apply(A, A @ x, x), x)
    lo, hi = sm.interval
    t = np.linspace(lo, hi, 200)
    damp = float(np.max(np.abs(sm.error_polynomial(t))))
    return max(fixed, 0.0 if damp < 1.0 else damp), 1e-12


CHECKS = {
    "sum-factorization vs Kronecker": check_sum_factorization,
    "basis adjoints": check_basis_adjoints,
    "assembled vs matrix-free": check_assembled_equivalence,
    "Jacobian finite difference": check_jacobian_fd,
    "initial-configuration variants FD": check_initial_variants_fd,
    "dual-number AD vs analytic": check_dual_ad,
    "energy gradient": check_energy_gradient,
    "Galerkin coarse operators": check_galerkin,
    "prolongation adjoint": check_prolongation_adjoint,
    "storage counts 17/19/26": check_storage_counts,
    "Q1 interior row neighbours": check_q1_sparsity,
    "Lanczos lambda_max": check_lanczos,
    "Chebyshev smoother": check_chebyshev,
}


def run_checks(names=None):
    results = []
    for name, fn in CHECKS.items():
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            value, tol = fn()
            passed = bool(np.isfinite(value) and value <= tol)
            error = ""
        except Exception as exc:  # a crashing check is a failed check
            value, tol, passed = float("nan"), float("nan"), False
            error = f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, passed, float(value), float(tol),
                                   time.perf_counter() - t0, error))
    return results


def format_table(results):
    w = max(len(r.name) for r in results)
    lines = [f"{'check':<{w}}  result  {'value':>10}  {'tol':>8}  {'time':>6}"]
    for r in results:
        lines.append(f"{r.name:<{w}}  {'PASS' if r.passed else 'FAIL':<6}  {r.value:10.3e}  "
                     f"{r.tolerance:8.1e}  {r.seconds:5.2f}s")
        if r.error:
            lines.append(f"    {r.error}")
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return "\n".join(lines)
