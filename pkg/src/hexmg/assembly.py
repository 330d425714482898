"""Split-phase COO assembly into CSR.

The symbolic phase takes ``(rows, cols)`` once, discards entries with a negative
index, merges duplicates and fixes the CSR pattern. The numeric phase maps each
``val[k]`` to its slot and sums; it can be repeated with new values.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import dense_grad
from .parallel import map_chunks


@dataclass(frozen=True)
class CooTemplate:
    """Symbolic COO plan: ``plan[k]`` is the CSR slot of entry ``k`` or -1."""

    n: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    plan: np.ndarray = field(repr=False)
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @property
    def nnz(self):
        return len(self.indices)

    @property
    def n_entries(self):
        return len(self.plan)

    def fill(self, values):
        """Numeric phase: sum ``values`` into a new CSR matrix with this pattern."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.plan.shape:
            raise ValueError(f"expected {self.plan.shape[0]} COO values, got {values.shape}")
        keep = self.plan >= 0
        data = np.bincount(self.plan[keep], weights=values[keep], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


def coo_preallocate(rows, cols, n):
    """Symbolic phase for raw COO coordinates."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.shape != cols.shape:
        raise ValueError("rows and cols must have equal length")
    keep = (rows >= 0) & (cols >= 0)
    if np.any(rows[keep] >= n) or np.any(cols[keep] >= n):
        raise ValueError("COO index out of range")
    keys = rows[keep] * n + cols[keep]
    uniq, inv = np.unique(keys, return_inverse=True)
    plan = np.full(rows.shape, -1, dtype=np.int64)
    plan[keep] = inv
    urow = uniq // n
    indices = (uniq % n).astype(np.int32 if n < 2 ** 31 else np.int64)
    indptr = np.zeros(n + 1, dtype=indices.dtype)
    np.cumsum(np.bincount(urow, minlength=n), out=indptr[1:])
    for a in (rows, cols, plan, indices, indptr):
        a.setflags(write=False)
    return CooTemplate(n=n, rows=rows, cols=cols, plan=plan, indptr=indptr, indices=indices)


def _element_dofs(restriction):
    idx = restriction.indices  # (ne, P^3)
    # local entry order (node, component)
    return (3 * idx[:, :, None] + np.arange(3)[None, None, :]).reshape(idx.shape[0], -1)


def coo_symbolic(jac):
    """Pattern of the operator: all element block couplings plus unit Dirichlet diagonals.

    Couplings touching a constrained dof get negative indices and are dropped;
    one explicit diagonal entry per constrained dof is appended.
    """
    dofs = _element_dofs(jac.restriction)
    ne, m = dofs.shape
    rows = np.broadcast_to(dofs[:, :, None], (ne, m, m)).copy()
    cols = np.broadcast_to(dofs[:, None, :], (ne, m, m)).copy()
    bad = jac.mask[rows] | jac.mask[cols]
    rows[bad] = -1
    cols[bad] = -1
    fixed = np.flatnonzero(jac.mask)
    rows = np.concatenate([rows.ravel(), fixed])
    cols = np.concatenate([cols.ravel(), fixed])
    return coo_preallocate(rows, cols, jac.n)


def element_matrices(jac, sl=slice(None)):
    """Element blocks ``K[e, (i,a), (k,b)]`` as triple products ``B^T D B``."""
    G = dense_grad(jac.basis)  # (3, Q^3, P^3)
    D = jac.quadrature_tangent(sl)
    T = np.einsum("eqajbl,lqk->eqajbk", D, G, optimize=True)
    K = np.einsum("jqi,eqajbk->eiakb", G, T, optimize=True)
    ne, P3 = K.shape[0], K.shape[1]
    return K.reshape(ne, 3 * P3, 3 * P3)


def coo_values(jac, template):
    """COO value array aligned with ``template`` for the operator's current state."""
    R = jac.restriction
    m = 3 * R.elem_size
    if template.n != jac.n or template.n_entries != R.n_elements * m * m + int(jac.mask.sum()):
        raise ValueError("COO template does not match operator")
    blocks = map_chunks(lambda sl: element_matrices(jac, sl).ravel(), R.n_elements, size=16)
    return np.concatenate(blocks + [np.ones(int(jac.mask.sum()))])


def coo_numeric(jac, template):
    return template.fill(coo_values(jac, template))


def assemble(jac, template=None):
    """Assembled CSR matrix of ``jac`` (symbolic phase reused when given)."""
    if template is None:
        template = coo_symbolic(jac)
    return coo_numeric(jac, template)
