"""1D Lagrange tabulations, Gauss quadrature and sum-factorized 3D basis actions.

Element vectors are laid out as ``(element, component, node)`` where the node
index is lexicographic with x fastest, i.e. ``node = i + P*(j + P*k)``.
Reshaped to ``(..., P, P, P)`` the trailing axes are ``(z, y, x)``.
Gradient direction 0 is the reference x direction.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre


@dataclass(frozen=True)
class QuadratureRule1D:
    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.points)


def gauss_legendre(q):
    """Gauss-Legendre rule with ``q`` points on [-1, 1]."""
    if q < 1:
        raise ValueError(f"quadrature size must be >= 1, got {q}")
    x, w = legendre.leggauss(q)
    return QuadratureRule1D(points=x, weights=w)


def gauss_lobatto_points(p):
    """The p+1 Gauss-Lobatto abscissae on [-1, 1] (endpoints plus roots of P_p')."""
    if p < 1:
        raise ValueError(f"polynomial order must be >= 1, got {p}")
    interior = legendre.Legendre.basis(p).deriv().roots() if p > 1 else np.empty(0)
    pts = np.concatenate([[-1.0], np.sort(np.real(interior)), [1.0]])
    # symmetrize to kill root-finder noise
    return 0.5 * (pts - pts[::-1])


def lagrange_tabulate(nodes, x):
    """Values and derivatives of the Lagrange polynomials on ``nodes`` at ``x``.

    Returns two arrays of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    denom = np.prod(diff, axis=1)

    dx = x[:, None] - nodes[None, :]  # (m, n)
    val = np.empty((len(x), n))
    der = np.zeros((len(x), n))
    for j in range(n):
        others = [k for k in range(n) if k != j]
        terms = dx[:, others]
        val[:, j] = np.prod(terms, axis=1) / denom[j]
        for a in range(len(others)):
            rest = np.delete(terms, a, axis=1)
            der[:, j] += np.prod(rest, axis=1)
        der[:, j] /= denom[j]
    return val, der


@dataclass(frozen=True)
class Basis1D:
    """Tabulated 1D Lagrange basis of order ``p`` on Gauss-Lobatto nodes.

    ``interp`` and ``deriv`` have shape ``(q, p+1)``. ``colloc_deriv`` is the
    ``q x q`` matrix ``deriv @ pinv(interp)`` that differentiates values already
    interpolated to quadrature points.
    """

    order: int
    nodes: np.ndarray
    interp: np.ndarray
    deriv: np.ndarray
    rule: QuadratureRule1D
    colloc_deriv: np.ndarray = field(repr=False)

    @property
    def P(self):
        return self.order + 1

    @property
    def Q(self):
        return self.rule.size

    @property
    def weights3d(self):
        w = self.rule.weights
        return np.einsum("k,j,i->kji", w, w, w).ravel()


def build_lagrange_basis(p, q=None):
    """Build a :class:`Basis1D` of order ``p`` with a ``q``-point Gauss rule.

    ``q`` defaults to ``p + 1``.
    """
    if p < 1:
        raise ValueError(f"polynomial order must be >= 1, got {p}")
    if q is None:
        q = p + 1
    if q < 1:
        raise ValueError(f"quadrature size must be >= 1, got {q}")
    if q < p + 1:
        raise ValueError(f"need q >= p+1 for a full-rank interpolation matrix (p={p}, q={q})")
    rule = gauss_legendre(q)
    nodes = gauss_lobatto_points(p)
    interp, deriv = lagrange_tabulate(nodes, rule.points)
    pinv = np.linalg.solve(interp.T @ interp, interp.T)
    colloc = deriv @ pinv
    for a in (nodes, interp, deriv, colloc, rule.points, rule.weights):
        a.setflags(write=False)
    return Basis1D(order=p, nodes=nodes, interp=interp, deriv=deriv, rule=rule,
                   colloc_deriv=colloc)


def interpolation_matrix(coarse_order, fine_order):
    """1D coarse-to-fine interpolation: coarse Lagrange basis at fine GLL nodes."""
    val, _ = lagrange_tabulate(gauss_lobatto_points(coarse_order),
                               gauss_lobatto_points(fine_order))
    return val


# -- sum factorization -------------------------------------------------------

def contract(mat, u, axis):
    """Apply the 1D matrix ``mat`` (m x n) along reference direction ``axis``.

    ``u`` has trailing axes ``(z, y, x)``; axis 0 acts on x, 1 on y, 2 on z.
    """
    if axis == 0:
        return u @ mat.T
    if axis == 1:
        return mat @ u
    if axis == 2:
        shp = u.shape
        v = u.reshape(shp[:-3] + (shp[-3], shp[-2] * shp[-1]))
        return (mat @ v).reshape(shp[:-3] + (mat.shape[0], shp[-2], shp[-1]))
    raise ValueError(f"axis must be 0, 1 or 2, got {axis}")


def tensor_apply(mat, u, n_in):
    """Apply ``mat (x) mat (x) mat`` to flat lexicographic data of length n_in**3."""
    if u.shape[-1] != n_in ** 3:
        raise ValueError(f"trailing dimension {u.shape[-1]} != {n_in}**3")
    v = u.reshape(u.shape[:-1] + (n_in, n_in, n_in))
    for axis in range(3):
        v = contract(mat, v, axis)
    m = mat.shape[0]
    return v.reshape(u.shape[:-1] + (m ** 3,))


def _check_ev(basis, ev):
    ev = np.asarray(ev)
    if ev.ndim < 2 or ev.shape[-1] != basis.P ** 3:
        raise ValueError(
            f"element vector trailing size {ev.shape[-1] if ev.ndim else None} "
            f"does not match (p+1)^3 = {basis.P ** 3}")
    return ev


def apply_interp(basis, ev, out=None):
    """Values at quadrature points, shape ``(..., Q^3)``."""
    ev = _check_ev(basis, ev)
    res = tensor_apply(basis.interp, ev, basis.P)
    if out is not None:
        out[...] = res
        return out
    return res


def apply_grad(basis, ev, out=None):
    """Reference gradients at quadrature points, shape ``(..., 3, Q^3)``.

    Interpolates once (three contractions) and then applies the collocated
    derivative along each direction (three more).
    """
    ev = _check_ev(basis, ev)
    P, Q = basis.P, basis.Q
    v = ev.reshape(ev.shape[:-1] + (P, P, P))
    for axis in range(3):
        v = contract(basis.interp, v, axis)
    if out is None:
        out = np.empty(ev.shape[:-1] + (3, Q ** 3))
    for d in range(3):
        out[..., d, :] = contract(basis.colloc_deriv, v, d).reshape(ev.shape[:-1] + (Q ** 3,))
    return out


def apply_grad_nine(basis, ev):
    """Reference gradients via three full tensor products (nine contractions)."""
    ev = _check_ev(basis, ev)
    P, Q = basis.P, basis.Q
    v = ev.reshape(ev.shape[:-1] + (P, P, P))
    out = np.empty(ev.shape[:-1] + (3, Q ** 3))
    for d in range(3):
        w = v
        for axis in range(3):
            w = contract(basis.deriv if axis == d else basis.interp, w, axis)
        out[..., d, :] = w.reshape(ev.shape[:-1] + (Q ** 3,))
    return out


def _check_q(basis, qv, with_dir):
    qv = np.asarray(qv)
    if qv.ndim < 2 or qv.shape[-1] != basis.Q ** 3 or (with_dir and qv.shape[-2] != 3):
        raise ValueError(f"quadrature data of shape {qv.shape} does not match basis "
                         f"with Q^3 = {basis.Q ** 3}")
    return qv


def apply_interp_transpose(basis, qv, out=None):
    qv = _check_q(basis, qv, False)
    res = tensor_apply(basis.interp.T, qv, basis.Q)
    if out is not None:
        out[...] = res
        return out
    return res


def apply_grad_transpose(basis, qv, out=None):
    """Adjoint of :func:`apply_grad`; ``qv`` has shape ``(..., 3, Q^3)``."""
    qv = _check_q(basis, qv, True)
    Q = basis.Q
    lead = qv.shape[:-2]
    acc = None
    for d in range(3):
        g = qv[..., d, :].reshape(lead + (Q, Q, Q))
        t = contract(basis.colloc_deriv.T, g, d)
        acc = t if acc is None else acc + t
    for axis in range(3):
        acc = contract(basis.interp.T, acc, axis)
    res = acc.reshape(lead + (basis.P ** 3,))
    if out is not None:
        out[...] = res
        return out
    return res


def dense_interp(basis):
    """Explicit ``Q^3 x P^3`` Kronecker interpolation matrix (testing and assembly)."""
    B = basis.interp
    return np.kron(B, np.kron(B, B))


def dense_grad(basis):
    """Explicit directional gradient matrices, shape ``(3, Q^3, P^3)``."""
    B, D = basis.interp, basis.deriv
    return np.stack([np.kron(B, np.kron(B, D)),
                     np.kron(B, np.kron(D, B)),
                     np.kron(D, np.kron(B, B))])
