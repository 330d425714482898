"""Neo-Hookean constitutive model and quadrature-point residual/Jacobian kernels.

All kernels are vectorized over a leading batch of quadrature points. Gradient
arrays use ``[..., component, direction]`` indexing. Stored linearization data
comes in four flavours (``QFUNCTION_VARIANTS``); each keeps its own dict of
arrays whose scalar count per point is reported by :func:`state_scalar_count`.
"""

from dataclasses import dataclass

import numpy as np

from . import dual
from .errors import IncompressibleUnsupportedError, InvertedElementError

QFUNCTION_VARIANTS = ("current", "initial-native", "initial-tuned", "initial-ad")

# Relative perturbation of the current-configuration Jacobian kernel.
# Only used by the verification suite's mutation check.
_jacobian_perturbation = 0.0

_I3 = np.eye(3)


def set_jacobian_perturbation(eps):
    global _jacobian_perturbation
    _jacobian_perturbation = float(eps)


@dataclass(frozen=True)
class NeoHookean:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        if not self.lam > -2.0 / 3.0 * self.mu:
            raise ValueError(f"lambda={self.lam} violates lambda > -2/3 mu")


def lame_from_young_poisson(E, nu):
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if nu == 0.5:
        raise IncompressibleUnsupportedError("nu = 0.5 (incompressible) is not supported")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return NeoHookean(mu=mu, lam=lam)


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _det_checked(F, where=None):
    J = np.linalg.det(F)
    bad = ~(J > 0)
    if np.any(bad):
        flat = int(np.argmax(bad.ravel()))
        loc = where(flat) if where is not None else (None, flat)
        raise InvertedElementError(
            f"inverted element: J={J.ravel()[flat]:.3e} at element {loc[0]}, point {loc[1]}",
            element=loc[0], point=loc[1])
    return J


def strain_energy_density(mat, grad_u):
    """psi = lam/2 (log J)^2 - mu log J + mu tr(e), e = (b - I)/2."""
    F = _I3 + np.asarray(grad_u, dtype=float)
    J = _det_checked(F)
    logJ = np.log(J)
    tr_b = np.einsum("...ij,...ij->...", F, F)
    return 0.5 * mat.lam * logJ ** 2 - mat.mu * logJ + 0.5 * mat.mu * (tr_b - 3.0)


def kirchhoff_stress(mat, grad_u):
    """tau = mu (b - I) + lam log J I."""
    F = _I3 + np.asarray(grad_u, dtype=float)
    J = _det_checked(F)
    b = F @ np.swapaxes(F, -1, -2)
    return mat.mu * (b - _I3) + (mat.lam * np.log(J))[..., None, None] * _I3


def second_piola(mat, grad_u):
    """S = lam log J C^-1 + mu (I - C^-1)."""
    F = _I3 + np.asarray(grad_u, dtype=float)
    J = _det_checked(F)
    C = np.swapaxes(F, -1, -2) @ F
    Cinv = np.linalg.inv(C)
    return (mat.lam * np.log(J))[..., None, None] * Cinv + mat.mu * (_I3 - Cinv)


# -- symmetric packing ---------------------------------------------------------

_SYM_IDX = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


def pack_sym(A):
    return np.stack([A[..., i, j] for i, j in _SYM_IDX], axis=-1)


def unpack_sym(v):
    out = np.empty(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(_SYM_IDX):
        out[..., i, j] = v[..., k]
        out[..., j, i] = v[..., k]
    return out


def state_scalar_count(state):
    """Stored scalars per quadrature point for a state dict."""
    n = 0
    for v in state.values():
        n += int(np.prod(v.shape[2:])) if v.ndim > 2 else 1
    return n


# -- current configuration -------------------------------------------------------

def residual_qfunction_current(mat, grad_u_ref, dxidX, wdet, where=None):
    """Residual kernel pulled back to reference coordinates.

    Parameters
    ----------
    grad_u_ref : (..., 3, 3) array
        Displacement gradient with respect to reference coordinates xi.
    dxidX : (..., 3, 3) array
        Inverse geometry map at the same points.
    wdet : (...) array
        Quadrature weight times ``det(dX/dxi)``.

    Returns
    -------
    f1 : (..., 3, 3) array
        ``wdet * tau @ (dxi/dx)^T``, to be tested against reference gradients.
    state : dict
        ``dxidx`` (9), ``tau`` (6, packed), ``lam_logJ`` (1) and ``wdet`` (1).
    """
    H = grad_u_ref @ dxidX
    F = _I3 + H
    J = _det_checked(F, where)
    lam_logJ = mat.lam * np.log(J)
    b = F @ np.swapaxes(F, -1, -2)
    tau = mat.mu * (b - _I3) + lam_logJ[..., None, None] * _I3
    dxidx = dxidX @ np.linalg.inv(F)
    f1 = wdet[..., None, None] * (tau @ np.swapaxes(dxidx, -1, -2))
    state = {"dxidx": dxidx, "tau": pack_sym(tau), "lam_logJ": lam_logJ, "wdet": wdet}
    return f1, state


def jacobian_qfunction_current(mat, grad_du_ref, state):
    """Linearized kernel: ``wdet * [grad_x du tau + lam tr(deps) I + 2(mu - lam log J) deps] (dxi/dx)^T``."""
    dxidx = state["dxidx"]
    tau = unpack_sym(state["tau"])
    lam_logJ = state["lam_logJ"]
    gdu = grad_du_ref @ dxidx
    deps = _sym(gdu)
    tr = np.trace(deps, axis1=-2, axis2=-1)
    dt = (gdu @ tau + (mat.lam * tr)[..., None, None] * _I3
          + 2.0 * (mat.mu - lam_logJ)[..., None, None] * deps)
    out = state["wdet"][..., None, None] * (dt @ np.swapaxes(dxidx, -1, -2))
    if _jacobian_perturbation:
        out = out * (1.0 + _jacobian_perturbation)
    return out


# -- initial configuration ---------------------------------------------------------

def residual_qfunction_initial(mat, grad_u_ref, dxidX, wdet, variant="initial-native", where=None):
    """Residual via ``P = F S(E)``; stores the data its Jacobian variant reads."""
    H = grad_u_ref @ dxidX
    F = _I3 + H
    J = _det_checked(F, where)
    lam_logJ = mat.lam * np.log(J)
    C = np.swapaxes(F, -1, -2) @ F
    Cinv = np.linalg.inv(C)
    S = lam_logJ[..., None, None] * Cinv + mat.mu * (_I3 - Cinv)
    f1 = wdet[..., None, None] * (F @ S @ np.swapaxes(dxidX, -1, -2))
    state = {"dxidX": dxidX, "wdet": wdet, "grad_u": H}
    if variant == "initial-tuned":
        state["Cinv"] = pack_sym(Cinv)
        state["lam_logJ"] = lam_logJ
    elif variant == "initial-ad":
        state["S"] = pack_sym(S)
    elif variant != "initial-native":
        raise ValueError(f"unknown initial-configuration variant {variant!r}")
    return f1, state


def _dS_analytic(mat, Cinv, lam_logJ, dE):
    CdEC = Cinv @ dE @ Cinv
    cde = np.einsum("...ij,...ij->...", Cinv, dE)
    return (mat.lam * cde)[..., None, None] * Cinv + 2.0 * (mat.mu - lam_logJ)[..., None, None] * CdEC


def jacobian_qfunction_initial_native(mat, grad_du_ref, state):
    dxidX = state["dxidX"]
    F = _I3 + state["grad_u"]
    C = np.swapaxes(F, -1, -2) @ F
    Cinv = np.linalg.inv(C)
    lam_logJ = mat.lam * np.log(np.linalg.det(F))
    S = lam_logJ[..., None, None] * Cinv + mat.mu * (_I3 - Cinv)
    dF = grad_du_ref @ dxidX
    dE = _sym(np.swapaxes(F, -1, -2) @ dF)
    dP = dF @ S + F @ _dS_analytic(mat, Cinv, lam_logJ, dE)
    return state["wdet"][..., None, None] * (dP @ np.swapaxes(dxidX, -1, -2))


def jacobian_qfunction_initial_tuned(mat, grad_du_ref, state):
    dxidX = state["dxidX"]
    F = _I3 + state["grad_u"]
    Cinv = unpack_sym(state["Cinv"])
    lam_logJ = state["lam_logJ"]
    S = lam_logJ[..., None, None] * Cinv + mat.mu * (_I3 - Cinv)
    dF = grad_du_ref @ dxidX
    dE = _sym(np.swapaxes(F, -1, -2) @ dF)
    dP = dF @ S + F @ _dS_analytic(mat, Cinv, lam_logJ, dE)
    return state["wdet"][..., None, None] * (dP @ np.swapaxes(dxidX, -1, -2))


def second_piola_dual(mat, E):
    """S(E) written once; derivatives come from dual propagation."""
    C = 2.0 * E + _I3
    Cinv = dual.inv3(C)
    logJ = 0.5 * dual.log(dual.det3(C))
    return dual.expand(mat.lam * logJ) * Cinv + mat.mu * (_I3 - Cinv)


def jacobian_qfunction_initial_ad(mat, grad_du_ref, state):
    dxidX = state["dxidX"]
    F = _I3 + state["grad_u"]
    dF = grad_du_ref @ dxidX
    Fd = dual.Dual(F, dF)
    E = 0.5 * (Fd.T @ Fd - _I3)
    dS = second_piola_dual(mat, E).deriv
    S = unpack_sym(state["S"])
    dP = dF @ S + F @ dS
    return state["wdet"][..., None, None] * (dP @ np.swapaxes(dxidX, -1, -2))


def residual_qfunction(mat, variant, grad_u_ref, dxidX, wdet, where=None):
    if variant == "current":
        return residual_qfunction_current(mat, grad_u_ref, dxidX, wdet, where)
    return residual_qfunction_initial(mat, grad_u_ref, dxidX, wdet, variant, where)


_JACOBIANS = {
    "current": jacobian_qfunction_current,
    "initial-native": jacobian_qfunction_initial_native,
    "initial-tuned": jacobian_qfunction_initial_tuned,
    "initial-ad": jacobian_qfunction_initial_ad,
}


def jacobian_qfunction(mat, variant, grad_du_ref, state):
    try:
        fn = _JACOBIANS[variant]
    except KeyError:
        raise ValueError(f"unknown q-function variant {variant!r}") from None
    return fn(mat, grad_du_ref, state)
