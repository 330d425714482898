"""Matrix-free p-multigrid with a sparse Cholesky coarse solve.

Levels share the quadrature points and stored linearization of the fine
operator, so each coarse operator is the exact Galerkin product ``P^T A P``.
The p=1 level is assembled and factored.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .assembly import assemble
from .basis import build_lagrange_basis, interpolation_matrix, tensor_apply
from .errors import NotSPDError
from .krylov import ChebyshevSmoother, as_apply
from .mesh import build_restriction, dirichlet_data


def coarsening_schedule(p):
    """Orders visited by halving: p, ceil(p/2), ..., 1."""
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    orders = [p]
    while orders[-1] > 1:
        orders.append(math.ceil(orders[-1] / 2))
    return orders


class Prolongation:
    """Coarse-to-fine interpolation averaged by fine node multiplicity.

    ``P = sum_e E_f^T diag(1/m_f) B_ctof E_c``; :meth:`restrict` is its exact
    transpose.
    """

    def __init__(self, coarse_restriction, fine_restriction, coarse_order, fine_order):
        self.coarse = coarse_restriction
        self.fine = fine_restriction
        self.pc, self.pf = coarse_order, fine_order
        self.B = interpolation_matrix(coarse_order, fine_order)
        m = fine_restriction.multiplicity[fine_restriction.indices]
        self._inv_mult = (1.0 / m)[:, None, :]

    @property
    def shape(self):
        return (3 * self.fine.n_nodes, 3 * self.coarse.n_nodes)

    def prolong(self, xc):
        ev = tensor_apply(self.B, self.coarse.gather(xc), self.pc + 1)
        return self.fine.scatter(ev * self._inv_mult)

    def restrict(self, xf):
        ev = self.fine.gather(xf) * self._inv_mult
        return self.coarse.scatter(tensor_apply(self.B.T, ev, self.pf + 1))


class BandedCholesky:
    """Sparse Cholesky factorization after reverse Cuthill-McKee reordering.

    The reordered matrix is factored in LAPACK banded storage.
    """

    def __init__(self, A, level=None):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        perm = reverse_cuthill_mckee(A, symmetric_mode=True)
        Ap = A[perm][:, perm].tocoo()
        lower = Ap.row >= Ap.col
        bw = int(np.max(Ap.row[lower] - Ap.col[lower])) if Ap.nnz else 0
        ab = np.zeros((bw + 1, n))
        ab[Ap.row[lower] - Ap.col[lower], Ap.col[lower]] = Ap.data[lower]
        try:
            self.cb = sla.cholesky_banded(ab, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotSPDError(f"coarse matrix is not SPD (level {level}): {exc}", level=level) from exc
        self.perm = perm
        self.bandwidth = bw
        self.n = n

    def solve(self, b):
        x = np.empty_like(b)
        x[self.perm] = sla.cho_solve_banded((self.cb, True), b[self.perm], check_finite=False)
        return x

    __call__ = solve


@dataclass
class MgLevel:
    order: int
    operator: object
    mask: np.ndarray
    smoother: ChebyshevSmoother = None
    prolongation: Prolongation = None  # from the next coarser level to this one
    matrix: object = None
    factor: BandedCholesky = None


@dataclass
class MultigridHierarchy:
    """Levels ordered fine to coarse; the last one carries the factorization."""

    levels: list = field(default_factory=list)
    pre_smooth: int = 1
    post_smooth: int = 1

    @property
    def orders(self):
        return [lv.order for lv in self.levels]

    def __call__(self, b):
        return v_cycle(self, b)

    def matvec(self, b):
        return v_cycle(self, b)


def build_hierarchy(problem_op, jac=None, schedule=None, pre_smooth=1, post_smooth=1):
    """p-multigrid hierarchy for the Jacobian of ``problem_op``.

    Parameters
    ----------
    problem_op : HyperelasticOperator
        Source of the mesh and boundary data.
    jac : JacobianOperator, optional
        Fine operator; default ``problem_op.jacobian()``.
    schedule : sequence of int, optional
        Orders fine to coarse, ending in 1.
    """
    if jac is None:
        jac = problem_op.jacobian()
    p = problem_op.mesh.order
    orders = list(schedule) if schedule is not None else coarsening_schedule(p)
    if orders[0] != p or orders[-1] != 1 or any(b >= a for a, b in zip(orders, orders[1:])):
        raise ValueError(f"schedule {orders} must decrease strictly from {p} to 1")
    Q = problem_op.basis.Q
    levels = [MgLevel(order=p, operator=jac, mask=jac.mask)]
    fine_R = jac.restriction
    for k, pc in enumerate(orders[1:], start=1):
        mesh_c = problem_op.mesh.with_order(pc)
        Rc = build_restriction(mesh_c)
        mask_c, _ = dirichlet_data(mesh_c, problem_op.bcs)
        op_c = jac.coarsened(Rc, build_lagrange_basis(pc, Q), mask_c)
        levels[-1].prolongation = Prolongation(Rc, fine_R, pc, levels[-1].order)
        levels.append(MgLevel(order=pc, operator=op_c, mask=mask_c))
        fine_R = Rc
    for k, lv in enumerate(levels[:-1]):
        lv.smoother = ChebyshevSmoother.calibrate(lv.operator, lv.operator.diagonal(), mask=lv.mask)
    coarse = levels[-1]
    coarse.matrix = assemble(coarse.operator)
    coarse.factor = BandedCholesky(coarse.matrix, level=len(levels) - 1)
    return MultigridHierarchy(levels=levels, pre_smooth=pre_smooth, post_smooth=post_smooth)


def _cycle(h, k, b):
    lv = h.levels[k]
    if k == len(h.levels) - 1:
        return lv.factor.solve(b)
    A = as_apply(lv.operator)
    x = np.zeros_like(b)
    for _ in range(h.pre_smooth):
        x = lv.smoother.apply(A, b, x)
    P = lv.prolongation
    coarse_mask = h.levels[k + 1].mask
    r = b - A(x)
    rc = P.restrict(r)
    rc[coarse_mask] = 0.0
    e = _cycle(h, k + 1, rc)
    e[coarse_mask] = 0.0
    corr = P.prolong(e)
    corr[lv.mask] = 0.0
    x += corr
    for _ in range(h.post_smooth):
        x = lv.smoother.apply(A, b, x)
    return x


def v_cycle(h, b, x0=None):
    """One V-cycle for ``A x = b``.

    Constrained dofs are solved exactly (identity block); the rest goes through
    smoothing, restriction, the recursive coarse solve and prolongation. With
    ``x0`` the cycle acts on the residual ``b - A x0``.
    """
    b = np.asarray(b, dtype=float)
    fine = h.levels[0]
    if x0 is not None:
        r = b - as_apply(fine.operator)(x0)
        return np.asarray(x0, dtype=float) + v_cycle(h, r)
    mask = fine.mask
    bf = np.where(mask, 0.0, b)
    x = _cycle(h, 0, bf)
    x[mask] = b[mask]
    return x
