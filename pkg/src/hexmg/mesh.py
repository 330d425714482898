"""Structured hexahedral box meshes, element restrictions and geometric factors."""

from dataclasses import dataclass, field

import numpy as np

from .basis import apply_grad, build_lagrange_basis, gauss_lobatto_points
from .errors import DegenerateElementError

FACES = ("-x", "+x", "-y", "+y", "-z", "+z")


@dataclass(frozen=True)
class BoxMesh:
    """Box ``[0, Lx] x [0, Ly] x [0, Lz]`` split into ``nx * ny * nz`` bricks.

    Node coordinates form a lexicographic lattice (x fastest) with Gauss-Lobatto
    spacing inside each element. An optional affine map ``X -> A X + b`` is
    applied to every coordinate, which keeps elements straight-sided.
    """

    extents: tuple
    counts: tuple
    order: int
    affine: np.ndarray = field(default=None, repr=False)
    offset: np.ndarray = field(default=None, repr=False)

    @property
    def lattice(self):
        p = self.order
        return tuple(p * n + 1 for n in self.counts)

    @property
    def n_nodes(self):
        nx, ny, nz = self.lattice
        return nx * ny * nz

    @property
    def n_elements(self):
        nx, ny, nz = self.counts
        return nx * ny * nz

    @property
    def n_dofs(self):
        return 3 * self.n_nodes

    def with_order(self, p):
        return BoxMesh(self.extents, self.counts, p, self.affine, self.offset)

    def refined(self, r):
        return BoxMesh(self.extents, tuple(r * n for n in self.counts), self.order,
                       self.affine, self.offset)

    def _axis_coords(self, axis, p):
        n = self.counts[axis]
        h = self.extents[axis] / n
        ref = 0.5 * (gauss_lobatto_points(p) + 1.0)
        c = np.empty(p * n + 1)
        for e in range(n):
            c[e * p:(e + 1) * p + 1] = (e + ref) * h
        return c

    def _map(self, X):
        if self.affine is not None:
            X = X @ np.asarray(self.affine).T
        if self.offset is not None:
            X = X + np.asarray(self.offset)
        return X

    @property
    def coords(self):
        """Node coordinates, shape ``(n_nodes, 3)``."""
        return self.lattice_coords(self.order)

    def lattice_coords(self, p):
        cx, cy, cz = (self._axis_coords(a, p) for a in range(3))
        Z, Y, X = np.meshgrid(cz, cy, cx, indexing="ij")
        return self._map(np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1))

    def element_coords(self, p):
        """Element node coordinates at order ``p``, shape ``(ne, 3, (p+1)^3)``."""
        mesh_p = self.with_order(p)
        conn = element_node_indices(mesh_p)
        X = mesh_p.coords
        return np.ascontiguousarray(X[conn].transpose(0, 2, 1))


def build_box_mesh(extents, counts, p, affine=None, offset=None):
    extents = tuple(float(v) for v in extents)
    counts = tuple(int(v) for v in counts)
    if len(extents) != 3 or len(counts) != 3:
        raise ValueError("extents and counts need three entries each")
    if any(v <= 0 for v in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(v < 1 for v in counts):
        raise ValueError(f"element counts must be >= 1, got {counts}")
    if int(p) < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    if affine is not None:
        affine = np.asarray(affine, dtype=float)
        if affine.shape != (3, 3) or np.linalg.det(affine) <= 0:
            raise ValueError("affine map must be a 3x3 matrix with positive determinant")
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
    return BoxMesh(extents, counts, int(p), affine, offset)


def element_node_indices(mesh):
    """Global node index of each local node, shape ``(ne, (p+1)^3)``.

    Elements are numbered lexicographically (x fastest), as are the local nodes.
    """
    p = mesh.order
    Nx, Ny, _ = mesh.lattice
    nx, ny, nz = mesh.counts
    loc = np.arange(p + 1)
    lk, lj, li = np.meshgrid(loc, loc, loc, indexing="ij")
    li, lj, lk = li.ravel(), lj.ravel(), lk.ravel()
    ez, ey, ex = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    ex, ey, ez = ex.ravel(), ey.ravel(), ez.ravel()
    gi = ex[:, None] * p + li[None, :]
    gj = ey[:, None] * p + lj[None, :]
    gk = ez[:, None] * p + lk[None, :]
    return gi + Nx * (gj + Ny * gk)


@dataclass(frozen=True)
class ElementRestriction:
    """Element-to-global node map for 3-component nodal fields.

    Global vectors are node-major: dof ``3*node + component``.
    """

    indices: np.ndarray
    n_nodes: int
    multiplicity: np.ndarray = field(repr=False)

    @property
    def n_elements(self):
        return self.indices.shape[0]

    @property
    def elem_size(self):
        return self.indices.shape[1]

    def gather(self, u, elements=slice(None)):
        """L-vector ``(3*n_nodes,)`` to E-vector ``(ne, 3, P^3)``."""
        u = np.asarray(u).reshape(self.n_nodes, 3)
        return u[self.indices[elements]].transpose(0, 2, 1)

    def scatter(self, ev, elements=slice(None), out=None):
        """Transpose of :meth:`gather`, summing shared nodes.

        Accumulation follows element order, so the result is deterministic.
        """
        idx = self.indices[elements].ravel()
        if out is None:
            out = np.zeros(3 * self.n_nodes)
        o = out.reshape(self.n_nodes, 3)
        for c in range(3):
            o[:, c] += np.bincount(idx, weights=ev[:, c, :].ravel(), minlength=self.n_nodes)
        return out


def build_restriction(mesh):
    idx = element_node_indices(mesh)
    mult = np.bincount(idx.ravel(), minlength=mesh.n_nodes)
    idx.setflags(write=False)
    mult.setflags(write=False)
    return ElementRestriction(indices=idx, n_nodes=mesh.n_nodes, multiplicity=mult)


@dataclass(frozen=True)
class GeometricFactors:
    """Per quadrature point geometry, arrays shaped ``(ne, Q^3, ...)``.

    ``dXdxi[..., i, j] = dX_i / dxi_j`` and ``dxidX`` is its inverse.
    ``wdet`` is the quadrature weight times ``det(dXdxi)``.
    """

    dXdxi: np.ndarray
    det: np.ndarray
    dxidX: np.ndarray
    wdet: np.ndarray

    @property
    def volume(self):
        return float(self.wdet.sum())


def compute_geometric_factors(mesh, basis, geometry_order=None):
    """Geometric factors at the quadrature points of ``basis``.

    The geometry is interpolated with a Lagrange basis of ``geometry_order``
    (default: the mesh order) tabulated at the same quadrature points.
    """
    g = mesh.order if geometry_order is None else int(geometry_order)
    gbasis = build_lagrange_basis(g, basis.Q)
    X = mesh.element_coords(g)
    grad = apply_grad(gbasis, X)  # (ne, 3 comp, 3 dir, Q^3)
    J = np.ascontiguousarray(grad.transpose(0, 3, 1, 2))
    det = np.linalg.det(J)
    bad = np.argwhere(~(det > 0))
    if len(bad):
        e, q = bad[0]
        raise DegenerateElementError(
            f"non-positive Jacobian determinant {det[e, q]:.3e} in element {e} "
            f"at quadrature point {q}", element=int(e), point=int(q))
    inv = np.linalg.inv(J)
    wdet = det * basis.weights3d[None, :]
    return GeometricFactors(dXdxi=J, det=det, dxidX=inv, wdet=wdet)


_FACE_AXIS = {"x": 0, "y": 1, "z": 2}


def _parse_face(face):
    if face not in FACES:
        raise ValueError(f"face must be one of {FACES}, got {face!r}")
    return _FACE_AXIS[face[1]], face[0] == "+"


def select_boundary_nodes(mesh, face):
    """Sorted global node indices lying on a box face."""
    axis, upper = _parse_face(face)
    N = mesh.lattice
    idx = np.arange(mesh.n_nodes).reshape(N[2], N[1], N[0])
    sl = [slice(None)] * 3
    sl[2 - axis] = N[axis] - 1 if upper else 0
    return np.sort(idx[tuple(sl)].ravel())


def face_elements(mesh, face):
    """Elements touching ``face`` and the local node indices on that face.

    Returns ``(elements, local)`` where ``local`` has shape ``(P, P)`` ordered
    by the two remaining reference directions (slower, faster).
    """
    axis, upper = _parse_face(face)
    nx, ny, nz = mesh.counts
    P = mesh.order + 1
    eidx = np.arange(mesh.n_elements).reshape(nz, ny, nx)
    sl = [slice(None)] * 3
    sl[2 - axis] = mesh.counts[axis] - 1 if upper else 0
    elems = eidx[tuple(sl)].ravel()
    lidx = np.arange(P ** 3).reshape(P, P, P)
    lsl = [slice(None)] * 3
    lsl[2 - axis] = P - 1 if upper else 0
    return elems, lidx[tuple(lsl)]


def face_area_factors(mesh, basis, face):
    """Surface measure ``|dX/da x dX/db|`` times 2D weights at face quadrature points.

    Returns ``(elements, local, wdA, interp2d)`` with ``wdA`` of shape
    ``(n_face_elements, Q^2)`` and ``interp2d`` the ``Q^2 x P^2`` face basis.
    """
    elems, local = face_elements(mesh, face)
    X = mesh.element_coords(mesh.order)[elems][:, :, local.ravel()]  # (nf, 3, P^2)
    B, D = basis.interp, basis.deriv
    Ga = np.kron(B, D)  # derivative along the faster face direction
    Gb = np.kron(D, B)  # slower face direction
    ta = np.einsum("qn,ecn->eqc", Ga, X)
    tb = np.einsum("qn,ecn->eqc", Gb, X)
    dA = np.linalg.norm(np.cross(ta, tb), axis=-1)
    w = basis.rule.weights
    w2 = np.outer(w, w).ravel()
    return elems, local, dA * w2[None, :], np.kron(B, B)


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary data on one box face.

    ``kind`` is ``"dirichlet"`` or ``"traction"``. For Dirichlet conditions
    ``value`` is a 3-vector or a callable mapping node coordinates ``(n, 3)``
    to displacements ``(n, 3)``, and ``components`` masks the constrained
    components. Tractions are dead loads per unit reference area.
    """

    face: str
    kind: str = "dirichlet"
    value: object = (0.0, 0.0, 0.0)
    components: tuple = (True, True, True)

    def __post_init__(self):
        _parse_face(self.face)
        if self.kind not in ("dirichlet", "traction"):
            raise ValueError(f"boundary kind must be 'dirichlet' or 'traction', got {self.kind!r}")
        if not callable(self.value) and np.shape(self.value) != (3,):
            raise ValueError(f"boundary value must be a 3-vector or callable, got {self.value!r}")


def dirichlet_data(mesh, bcs):
    """Constrained-dof mask and prescribed values (at full load) for ``bcs``.

    Overlapping faces must agree on shared constrained components.
    """
    mask = np.zeros(mesh.n_dofs, dtype=bool)
    values = np.zeros(mesh.n_dofs)
    X = None
    for bc in bcs:
        if bc.kind != "dirichlet":
            continue
        nodes = select_boundary_nodes(mesh, bc.face)
        if callable(bc.value):
            if X is None:
                X = mesh.coords
            vals = np.asarray(bc.value(X[nodes]), dtype=float).reshape(len(nodes), 3)
        else:
            vals = np.broadcast_to(np.asarray(bc.value, dtype=float), (len(nodes), 3))
        for c in range(3):
            if not bc.components[c]:
                continue
            dofs = 3 * nodes + c
            clash = mask[dofs] & ~np.isclose(values[dofs], vals[:, c], rtol=1e-12, atol=1e-14)
            if np.any(clash):
                raise ValueError(f"conflicting Dirichlet values on face {bc.face}, component {c}")
            mask[dofs] = True
            values[dofs] = vals[:, c]
    return mask, values
