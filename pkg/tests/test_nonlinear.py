import numpy as np
import pytest

from conftest import make_problem
from hexmg.errors import InvertedElementError, LineSearchError, SolverError
from hexmg.nonlinear import (NewtonConfig, critical_point_line_search, lbfgs_solve,
                             load_continuation, newton_solve)


class QuadraticProblem:
    """Residual ``A u - b`` of a quadratic energy, duck-typed for the line search."""

    def __init__(self, A, b, fail_beyond=None):
        self.A, self.b = A, b
        self.fail_beyond = fail_beyond

    def residual(self, u, store=False):
        if self.fail_beyond is not None and np.linalg.norm(u) > self.fail_beyond:
            raise InvertedElementError("synthetic inversion")
        return self.A @ u - self.b


def _quadratic(seed=0, n=8):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return QuadraticProblem(B @ B.T + n * np.eye(n), rng.standard_normal(n))


def test_line_search_exact_for_linear_residual():
    q = _quadratic()
    u = np.zeros(8)
    du = 0.7 * np.linalg.solve(q.A, q.b)  # exact minimiser lies at alpha = 1/0.7
    alpha, info = critical_point_line_search(q, u, du)
    assert alpha == pytest.approx(1 / 0.7, rel=1e-12)
    assert abs(q.residual(u + alpha * du) @ du) < 1e-12 * abs(info["g0"])


def test_line_search_clamps():
    q = _quadratic(1)
    du = 10.0 * np.linalg.solve(q.A, q.b)
    alpha, _ = critical_point_line_search(q, np.zeros(8), du)
    assert alpha == 0.1
    du = 0.1 * np.linalg.solve(q.A, q.b)
    alpha, _ = critical_point_line_search(q, np.zeros(8), du)
    assert alpha == 2.0


def test_line_search_flat_directional_derivative_takes_full_step():
    q = QuadraticProblem(np.zeros((2, 2)), np.array([1.0, 0.0]))
    alpha, info = critical_point_line_search(q, np.zeros(2), np.array([1.0, 0.0]))
    assert info["g0"] == info["g1"]
    assert alpha == 1.0


def test_line_search_backs_off_from_inversion():
    q = _quadratic(2)
    q.fail_beyond = 0.5 * np.linalg.norm(np.linalg.solve(q.A, q.b))
    du = np.linalg.solve(q.A, q.b)
    alpha, info = critical_point_line_search(q, np.zeros(8), du)
    assert info["trial"] < 1.0
    assert alpha <= info["trial"]


def test_line_search_gives_up():
    q = _quadratic(3)
    q.fail_beyond = 0.0
    with pytest.raises(LineSearchError):
        critical_point_line_search(q, np.zeros(8) + 1e-3, np.ones(8), F0=np.ones(8))


def test_line_search_reduces_directional_derivative():
    op = make_problem(p=2, counts=(2, 1, 1), traction=(0.0, 0.08, 0.0))
    u = np.zeros(op.n_dofs)
    F = op.residual(u)
    du = -F  # steepest descent
    du[op.mask] = 0.0
    alpha, info = critical_point_line_search(op, u, du, F)
    g = op.residual(u + alpha * du, store=False) @ du
    assert abs(g) < abs(info["g1"]) or alpha == 1.0


def test_tiny_load_single_newton_step():
    op = make_problem(p=2, counts=(2, 1, 1), traction=(0.0, 1e-9, 0.0))
    u, rep = newton_solve(op, config=NewtonConfig(linear_rtol=1e-12))
    assert rep.converged and rep.iterations == 1


def test_zero_load_needs_no_iterations():
    op = make_problem(traction=None)
    u, rep = newton_solve(op)
    assert rep.converged and rep.iterations == 0
    assert not np.any(u)


def test_quadratic_convergence_tail():
    op = make_problem(p=2, counts=(2, 1, 1), traction=(0.0, 0.1, 0.05))
    _, rep = newton_solve(op, config=NewtonConfig(linear_rtol=1e-12, rtol=1e-14, atol=1e-15))
    r = np.array(rep.residual_norms)
    r = r[r > 1e-13]
    assert rep.converged
    # each late step roughly squares the residual
    ratios = np.log(r[2:]) / np.log(r[1:-1])
    assert ratios[-1] > 1.7


def test_inexact_newton_still_converges():
    op = make_problem(p=3, counts=(2, 1, 1), traction=(0.0, 0.05, 0.0))
    _, rep = newton_solve(op)
    assert rep.converged and rep.iterations <= 8
    assert all(r["cg_converged"] for r in rep.records)


def test_no_line_search_option():
    op = make_problem(p=2, counts=(2, 1, 1))
    _, rep = newton_solve(op, config=NewtonConfig(line_search="none"))
    assert rep.converged
    assert all(r["alpha"] == 1.0 for r in rep.records)


@pytest.mark.parametrize("kw", [dict(rtol=0), dict(load_steps=0), dict(line_search="armijo"),
                                dict(lbfgs_memory=-1), dict(lbfgs_refresh=0)])
def test_invalid_newton_config(kw):
    with pytest.raises(ValueError):
        NewtonConfig(**kw)


def test_lbfgs_with_exact_initial_hessian_one_iteration():
    # on a Q1 mesh the hierarchy is a direct factorization of the Jacobian
    op = make_problem(p=1, counts=(2, 1, 1), traction=(0.0, 1e-9, 0.0))
    _, rep = lbfgs_solve(op)
    assert rep.converged and rep.iterations == 1


@pytest.mark.parametrize("memory", [0, 1, 5])
def test_lbfgs_matches_newton(memory):
    op = make_problem(p=2, counts=(2, 1, 1))
    un, _ = newton_solve(op)
    op = make_problem(p=2, counts=(2, 1, 1))
    ul, rep = lbfgs_solve(op, memory=memory)
    assert rep.converged
    assert np.abs(ul - un).max() < 1e-8 * np.abs(un).max()


def test_lbfgs_lagged_preconditioner_needs_fewer_applies():
    def mk():
        return make_problem(p=2, counts=(3, 2, 2), traction=(0.0, 0.05, 0.02))

    _, newton = newton_solve(mk())
    _, lagged = lbfgs_solve(mk(), refresh=3)
    assert newton.converged and lagged.converged
    assert lagged.jacobian_applies < newton.jacobian_applies


def test_continuation_single_step_equals_direct_solve():
    op = make_problem(p=2, counts=(2, 1, 1))
    u1, reps = load_continuation(op, steps=1)
    op2 = make_problem(p=2, counts=(2, 1, 1))
    u2, _ = newton_solve(op2)
    assert len(reps) == 1 and reps[0][0] == 1.0
    np.testing.assert_array_equal(u1, u2)


def test_continuation_energy_independent_of_step_count():
    psi = []
    for N in (1, 2, 5):
        op = make_problem(p=2, counts=(2, 1, 1), traction=(0.0, 0.1, 0.0))
        u, reps = load_continuation(op, steps=N)
        assert [t for t, _ in reps] == pytest.approx([k / N for k in range(1, N + 1)])
        psi.append(op.strain_energy(u))
    assert np.ptp(psi) <= 1e-7 * max(psi)


def test_continuation_zero_load():
    op = make_problem(traction=None)
    u, reps = load_continuation(op, steps=3)
    assert not np.any(u)
    assert all(rep.iterations == 0 for _, rep in reps)


def test_continuation_callback_carries_load():
    seen = []
    op = make_problem(p=2, counts=(2, 1, 1))
    load_continuation(op, steps=2, callback=seen.append)
    assert {r["load"] for r in seen} == {0.5, 1.0}


def test_continuation_bisects_and_recovers():
    op = make_problem(p=2, counts=(2, 1, 1), traction=(0.0, 0.3, 0.0))
    cfg = NewtonConfig(max_it=6)  # the full step needs 7 iterations
    u, reps = load_continuation(op, steps=1, config=cfg)
    loads = [t for t, _ in reps]
    assert loads[-1] == 1.0 and len(loads) > 1


def test_continuation_gives_up_with_phase():
    op = make_problem(p=2, counts=(2, 1, 1), traction=(0.0, 0.1, 0.0))
    with pytest.raises(SolverError) as exc:
        load_continuation(op, steps=1, config=NewtonConfig(max_it=1), max_bisections=1)
    assert exc.value.phase == "nonlinear-solve"


def test_continuation_rejects_bad_arguments():
    op = make_problem()
    with pytest.raises(ValueError):
        load_continuation(op, steps=0)
    with pytest.raises(ValueError):
        load_continuation(op, solver="gauss-seidel")
