"""Matrix-free hyperelastic residual and Jacobian operators.

The residual chains element restriction and basis evaluation around a pointwise q-function,

    F(u) = sum_e E_e^T B^T W f(B E_e u) - f_ext,

and records the per-point linearization data consumed by
:class:`JacobianOperator`. Constrained (Dirichlet) dofs are handled by masking:
residual entries are zero there and Jacobians act as the identity.
"""

import numpy as np

from .basis import (apply_grad, apply_grad_transpose, apply_interp_transpose,
                    build_lagrange_basis, dense_grad)
from .errors import StateNotInitializedError
from .material import (QFUNCTION_VARIANTS, jacobian_qfunction, residual_qfunction,
                       state_scalar_count, strain_energy_density)
from .mesh import (build_restriction, compute_geometric_factors, dirichlet_data,
                   face_area_factors)
from .parallel import map_chunks


def _to_points(g):
    # (ne, comp, dir, Q) -> (ne, Q, comp, dir)
    return np.ascontiguousarray(g.transpose(0, 3, 1, 2))


def _from_points(f):
    return np.ascontiguousarray(f.transpose(0, 2, 3, 1))


def traction_load(mesh, basis, face, traction):
    """Consistent nodal load ``int_face N t dA`` for a constant dead traction."""
    elems, local, wdA, B2 = face_area_factors(mesh, basis, face)
    t = np.asarray(traction, dtype=float)
    nodal = np.einsum("eq,qn->en", wdA, B2)  # (nf, P^2)
    idx = build_restriction(mesh).indices[elems][:, local.ravel()]
    out = np.zeros((mesh.n_nodes, 3))
    w = np.bincount(idx.ravel(), weights=nodal.ravel(), minlength=mesh.n_nodes)
    out += w[:, None] * t[None, :]
    return out.ravel()


class HyperelasticOperator:
    """Nonlinear residual of a Neo-Hookean body on a box mesh.

    Parameters
    ----------
    mesh : BoxMesh
        Mesh whose order is the solution order.
    material : NeoHookean
    bcs : sequence of BoundaryCondition
    variant : str
        Jacobian representation, one of ``QFUNCTION_VARIANTS``.
    q : int, optional
        Quadrature points per direction, default ``p + 1``.
    geometry_order : int, optional
        Order of the geometry interpolation, default the solution order.
    body_force : 3-vector, optional
        ``rho0 * g``; a dead load per unit reference volume.
    """

    def __init__(self, mesh, material, bcs=(), variant="current", q=None,
                 geometry_order=None, body_force=None):
        if variant not in QFUNCTION_VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {QFUNCTION_VARIANTS}")
        self.mesh = mesh
        self.material = material
        self.bcs = tuple(bcs)
        self.variant = variant
        self.basis = build_lagrange_basis(mesh.order, q)
        self.restriction = build_restriction(mesh)
        self.geometry_order = mesh.order if geometry_order is None else int(geometry_order)
        self.geom = compute_geometric_factors(mesh, self.basis, self.geometry_order)
        self.mask, self.dirichlet_values = dirichlet_data(mesh, self.bcs)
        self.external_load = np.zeros(mesh.n_dofs)
        for bc in self.bcs:
            if bc.kind == "traction":
                self.external_load += traction_load(mesh, self.basis, bc.face, bc.value)
        if body_force is not None:
            self.external_load += self._body_load(body_force)
        self.external_load[self.mask] = 0.0
        self.load_scale = 1.0
        self.state = None
        self.residual_count = 0

    @property
    def n_dofs(self):
        return self.mesh.n_dofs

    @property
    def n_quadrature_points(self):
        return self.geom.wdet.size

    def _body_load(self, g):
        g = np.asarray(g, dtype=float)
        R = self.restriction
        qv = np.broadcast_to(self.geom.wdet[:, None, :], (R.n_elements, 3, self.geom.wdet.shape[1])) \
            * g[None, :, None]
        return R.scatter(apply_interp_transpose(self.basis, np.ascontiguousarray(qv)))

    # -- load handling --------------------------------------------------------

    def lift(self, u, scale=None):
        """Copy of ``u`` with the Dirichlet values (times the load scale) imposed."""
        s = self.load_scale if scale is None else scale
        v = np.array(u, dtype=float, copy=True)
        v[self.mask] = s * self.dirichlet_values[self.mask]
        return v

    def zero_state(self):
        return self.lift(np.zeros(self.n_dofs))

    def load_vector(self):
        return self.load_scale * self.external_load

    # -- residual ---------------------------------------------------------------

    def _where(self, start, Q3):
        return lambda flat: (start + flat // Q3, flat % Q3)

    def residual(self, u, store=True):
        """``F(u)``, storing the linearization at ``u`` when ``store`` is set."""
        u = np.asarray(u, dtype=float)
        R, basis, geom, mat = self.restriction, self.basis, self.geom, self.material
        Q3 = basis.Q ** 3

        def work(sl):
            g = _to_points(apply_grad(basis, R.gather(u, sl)))
            f1, st = residual_qfunction(mat, self.variant, g, geom.dxidX[sl], geom.wdet[sl],
                                        where=self._where(sl.start, Q3))
            return apply_grad_transpose(basis, _from_points(f1)), st

        parts = map_chunks(work, R.n_elements)
        ev = np.concatenate([p[0] for p in parts])
        F = R.scatter(ev)
        F -= self.load_vector()
        F[self.mask] = 0.0
        self.residual_count += 1
        if store:
            self.state = {k: np.concatenate([p[1][k] for p in parts]) for k in parts[0][1]}
        return F

    def jacobian(self):
        """Jacobian bound to the state stored by the last :meth:`residual`."""
        if self.state is None:
            raise StateNotInitializedError("residual() must be evaluated before the Jacobian")
        return JacobianOperator(self.restriction, self.basis, self.material, self.variant,
                                self.state, self.mask)

    def apply_jacobian(self, du):
        return self.jacobian().apply(du)

    # -- energy -------------------------------------------------------------------

    def strain_energy(self, u):
        """Total strain energy: sum over points of ``w det(dX/dxi) psi``."""
        u = np.asarray(u, dtype=float)
        R, basis, geom, mat = self.restriction, self.basis, self.geom, self.material

        def work(sl):
            g = _to_points(apply_grad(basis, R.gather(u, sl)))
            psi = strain_energy_density(mat, g @ geom.dxidX[sl])
            return float(np.sum(geom.wdet[sl] * psi))

        return float(sum(map_chunks(work, R.n_elements)))

    def potential_energy(self, u):
        """Strain energy minus work of the (dead) external loads on free dofs."""
        f = self.load_vector()
        return self.strain_energy(u) - float(f @ u)

    def state_scalars_per_point(self):
        if self.state is None:
            raise StateNotInitializedError("no stored state")
        return state_scalar_count(self.state)


class JacobianOperator:
    """Linearized operator ``E^T B^T D B E`` acting matrix-free.

    ``basis`` may be of lower order than the one that produced ``state`` as long
    as it is tabulated at the same quadrature points; this gives the Galerkin
    coarse operators used by p-multigrid.
    """

    def __init__(self, restriction, basis, material, variant, state, mask):
        if state is None:
            raise StateNotInitializedError("Jacobian needs stored quadrature state")
        if state["wdet"].shape[1] != basis.Q ** 3:
            raise ValueError("basis quadrature does not match stored state")
        self.restriction = restriction
        self.basis = basis
        self.material = material
        self.variant = variant
        self.state = state
        self.mask = np.asarray(mask, dtype=bool)
        self.apply_count = 0

    @property
    def n(self):
        return 3 * self.restriction.n_nodes

    @property
    def shape(self):
        return (self.n, self.n)

    def coarsened(self, restriction, basis, mask):
        return JacobianOperator(restriction, basis, self.material, self.variant, self.state, mask)

    def _state(self, sl):
        return {k: v[sl] for k, v in self.state.items()}

    def apply_unmasked(self, x):
        R, basis = self.restriction, self.basis

        def work(sl):
            g = _to_points(apply_grad(basis, R.gather(x, sl)))
            f = jacobian_qfunction(self.material, self.variant, g, self._state(sl))
            return apply_grad_transpose(basis, _from_points(f))

        ev = np.concatenate(map_chunks(work, R.n_elements))
        return R.scatter(ev)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        xf = np.where(self.mask, 0.0, x)
        y = self.apply_unmasked(xf)
        y[self.mask] = x[self.mask]
        self.apply_count += 1
        return y

    matvec = apply
    __call__ = apply

    def __matmul__(self, x):
        return self.apply(x)

    def quadrature_tangent(self, sl=slice(None)):
        """Pointwise tangent ``D[e, q, a, j, b, l] = d f1[a, j] / d grad[b, l]``."""
        st = self._state(sl)
        ne, Q3 = st["wdet"].shape
        D = np.empty((ne, Q3, 3, 3, 3, 3))
        for b in range(3):
            for l in range(3):
                g = np.zeros((ne, Q3, 3, 3))
                g[..., b, l] = 1.0
                D[..., b, l] = jacobian_qfunction(self.material, self.variant, g, st)
        return D

    def diagonal(self):
        """Diagonal of the operator (1 on constrained dofs), computed matrix-free."""
        R = self.restriction
        G = dense_grad(self.basis)  # (3, Q^3, P^3)

        def work(sl):
            D = self.quadrature_tangent(sl)
            Da = np.einsum("eqajal->eqajl", D)
            return np.einsum("jqi,eqajl,lqi->eai", G, Da, G, optimize=True)

        d = R.scatter(np.concatenate(map_chunks(work, R.n_elements)))
        d[self.mask] = 1.0
        return d

    def stored_bytes(self):
        """Bytes of quadrature data plus restriction indices held by this operator."""
        data = sum(v.nbytes for v in self.state.values())
        return data + self.restriction.indices.size * 4
