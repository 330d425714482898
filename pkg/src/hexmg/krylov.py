"""Preconditioned CG with Lanczos eigenvalue estimates, and Chebyshev smoothing."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import IndefiniteOperatorError, InvalidSmootherError

ROUGH_SEED = 20220513


def as_apply(A):
    """Callable ``x -> A x`` for matrices, operators with ``matvec`` or callables."""
    if A is None:
        return lambda x: np.array(x, dtype=float, copy=True)
    if hasattr(A, "matvec"):
        return A.matvec
    if callable(A):
        return A
    return lambda x: A @ x


@dataclass
class CgReport:
    iterations: int = 0
    converged: bool = False
    residual_history: list = field(default_factory=list)
    eig_min: float = float("nan")
    eig_max: float = float("nan")

    @property
    def condition(self):
        if not np.isfinite(self.eig_min) or self.eig_min <= 0:
            return float("nan")
        return max(1.0, self.eig_max / self.eig_min)


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix implied by CG coefficients.

    ``betas[k]`` is the ratio ``(r_{k+1}, z_{k+1}) / (r_k, z_k)``.
    """
    k = len(alphas)
    d = np.empty(k)
    e = np.empty(max(k - 1, 0))
    for i in range(k):
        d[i] = 1.0 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0.0)
        if i < k - 1:
            e[i] = np.sqrt(betas[i]) / alphas[i]
    return d, e


def _ritz(alphas, betas):
    if not alphas:
        return np.array([np.nan])
    d, e = lanczos_tridiagonal(alphas, betas)
    if len(d) == 1:
        return d
    return eigvalsh_tridiagonal(d, e)


def cg_solve(A, b, M=None, rtol=1e-3, maxits=500, x0=None, atol=0.0, callback=None):
    """Preconditioned conjugate gradients.

    Convergence is measured in the natural norm ``sqrt(r^T M r)`` relative to
    the initial one. Extreme eigenvalues of ``M A`` are estimated from the
    Lanczos tridiagonal built from the CG coefficients.

    Returns
    -------
    x : ndarray
    report : CgReport
    """
    Aop, Mop = as_apply(A), as_apply(M)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    r = b - Aop(x) if x0 is not None else b.copy()
    z = Mop(r)
    rz = float(r @ z)
    rep = CgReport()
    if rz < 0:
        raise IndefiniteOperatorError("preconditioner is not positive definite")
    norm0 = np.sqrt(rz)
    rep.residual_history.append(norm0)
    if norm0 <= atol or norm0 == 0.0:
        rep.converged = True
        rep.eig_min = rep.eig_max = float("nan")
        return x, rep
    p = z.copy()
    alphas, betas = [], []
    for k in range(maxits):
        Ap = Aop(p)
        pAp = float(p @ Ap)
        if not pAp > 0:
            raise IndefiniteOperatorError(f"p^T A p = {pAp:.3e} <= 0 at iteration {k}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = Mop(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise IndefiniteOperatorError("preconditioner is not positive definite")
        alphas.append(alpha)
        rep.iterations = k + 1
        nrm = np.sqrt(rz_new)
        rep.residual_history.append(nrm)
        if callback is not None:
            callback(k, x, nrm)
        if nrm <= max(rtol * norm0, atol):
            rep.converged = True
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    ritz = _ritz(alphas, betas)
    rep.eig_min, rep.eig_max = float(ritz[0]), float(ritz[-1])
    return x, rep


def rough_seed(n, mask=None, seed=ROUGH_SEED):
    """Deterministic seed vector, uniform in (-1, 1), zero on constrained dofs."""
    v = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    if mask is not None:
        v[mask] = 0.0
    return v


def estimate_lambda_max(A, M=None, n=None, mask=None, iterations=10, seed_vector=None):
    """Largest Ritz value of ``M A`` after ``iterations`` Lanczos steps.

    The Lanczos process is run in its CG form on ``A x = s`` from the rough
    seed ``s``. Early breakdown returns the estimate available at that point.
    """
    Aop, Mop = as_apply(A), as_apply(M)
    if seed_vector is None:
        if n is None:
            n = A.shape[0]
        seed_vector = rough_seed(n, mask)
    r = np.array(seed_vector, dtype=float, copy=True)
    z = Mop(r)
    rz = float(r @ z)
    if rz <= 0:
        return float("nan")
    p = z.copy()
    alphas, betas = [], []
    scale = rz
    for _ in range(iterations):
        Ap = Aop(p)
        pAp = float(p @ Ap)
        if not pAp > 0:
            break
        alpha = rz / pAp
        alphas.append(alpha)
        r -= alpha * Ap
        z = Mop(r)
        rz_new = float(r @ z)
        if rz_new <= 1e-28 * scale:
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    return float(_ritz(alphas, betas)[-1])


@dataclass
class ChebyshevSmoother:
    """Degree-2 Chebyshev iteration preconditioned by the Jacobi diagonal.

    Targets the interval ``[lo * lambda_max, hi * lambda_max]`` of ``D^-1 A``.
    """

    diagonal: np.ndarray
    lambda_max: float
    degree: int = 2
    lo: float = 0.1
    hi: float = 1.1

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        if np.any(d == 0) or not np.all(np.isfinite(d)):
            raise InvalidSmootherError("Jacobi diagonal has zero or non-finite entries")
        if not self.lambda_max > 0:
            raise InvalidSmootherError(f"lambda_max must be positive, got {self.lambda_max}")
        self.inv_diag = 1.0 / d

    @property
    def interval(self):
        return self.lo * self.lambda_max, self.hi * self.lambda_max

    @classmethod
    def calibrate(cls, A, diagonal, mask=None, **kw):
        inv = 1.0 / np.asarray(diagonal, dtype=float)
        lmax = estimate_lambda_max(A, lambda r: inv * r, n=len(diagonal), mask=mask)
        return cls(diagonal=diagonal, lambda_max=lmax, **kw)

    def apply(self, A, b, x):
        """Run ``degree`` Chebyshev steps on ``A x = b`` starting from ``x``."""
        Aop = as_apply(A)
        a, bnd = self.interval
        theta = 0.5 * (bnd + a)
        delta = 0.5 * (bnd - a)
        sigma = theta / delta
        x = np.array(x, dtype=float, copy=True)
        r = b - Aop(x)
        d = self.inv_diag * r / theta
        x += d
        rho_old = 1.0 / sigma
        for _ in range(1, self.degree):
            rho = 1.0 / (2.0 * sigma - rho_old)
            r = b - Aop(x)
            d = rho * rho_old * d + (2.0 * rho / delta) * (self.inv_diag * r)
            x += d
            rho_old = rho
        return x

    def error_polynomial(self, t):
        """Error-propagation polynomial value at eigenvalue(s) ``t`` of ``D^-1 A``."""
        a, bnd = self.interval
        theta = 0.5 * (bnd + a)
        delta = 0.5 * (bnd - a)
        Tk = np.polynomial.chebyshev.Chebyshev.basis(self.degree)
        return Tk((theta - np.asarray(t)) / delta) / Tk(theta / delta)


def chebyshev_apply(smoother, A, b, x):
    return smoother.apply(A, b, x)
