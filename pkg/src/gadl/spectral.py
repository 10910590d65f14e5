"""Truncated eigendecomposition of the normalised Laplacian."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
DENSE_LIMIT = 2000


class EigenSolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (worst residual {residual:.3e})")


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``r`` eigenpairs; ``phi`` columns orthonormal, ``lam`` ascending."""

    phi: np.ndarray
    lam: np.ndarray

    @property
    def r(self) -> int:
        return self.phi.shape[1]

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    def truncate(self, r: int) -> "SpectralBasis":
        return SpectralBasis(self.phi[:, :r], self.lam[:r])


def fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive.

    ``argmax`` returns the first maximiser, so exact ties go to the lowest row.
    """
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def residuals(mat: np.ndarray, vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    return np.linalg.norm(mat @ vecs - vecs * vals, axis=0)


def jacobi_eigh(mat: np.ndarray, tol: float = 1e-14, max_sweeps: int | None = None):
    """Cyclic Jacobi rotations for a dense symmetric matrix.

    Returns ``(vals, vecs)`` with ascending eigenvalues. Slow (``O(n^3)`` per
    sweep) but short and independent of LAPACK, which makes it a useful
    reference on small inputs.
    """
    a = np.array(mat, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if max_sweeps is None:
        max_sweeps = 100 * n
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(max_sweeps):
        # summing squares of the off-diagonal part directly; |A|² - |diag|² cancels badly
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        raise EigenSolverError(f"Jacobi did not converge in {max_sweeps} sweeps", float(off))
    vals = np.diag(a).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], v[:, order]


def lanczos_smallest(mat: np.ndarray, r: int, tol: float = RESIDUAL_TOL, seed: int = 0,
                     max_restarts: int | None = None):
    """Smallest ``r`` eigenpairs via Lanczos with full reorthogonalisation.

    The Krylov basis is grown in blocks of ``r`` vectors; after each block the
    Ritz pairs are tested against ``tol``. A basis that reaches ``n`` vectors
    is exact, so the loop always terminates with a converged answer or an
    explicit error once ``max_restarts`` extensions have been spent.
    """
    n = mat.shape[0]
    if max_restarts is None:
        max_restarts = 10 * r
    rng = np.random.default_rng(seed)
    basis = np.zeros((n, n))
    alphas: list[float] = []
    betas: list[float] = []

    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    k = 0
    beta_prev = 0.0
    target = min(n, 2 * r + 20)
    worst = np.inf
    for _ in range(max_restarts + 1):
        while k < target:
            basis[:, k] = q
            w = mat @ q
            alpha = float(q @ w)
            w -= alpha * q
            if k > 0:
                w -= beta_prev * basis[:, k - 1]
            # two passes of classical Gram-Schmidt against the whole basis
            for _ in range(2):
                w -= basis[:, : k + 1] @ (basis[:, : k + 1].T @ w)
            beta = float(np.linalg.norm(w))
            alphas.append(alpha)
            k += 1
            if k == n:
                break
            if beta <= 1e-10:
                # invariant subspace found: continue from a fresh orthogonal direction
                w = rng.standard_normal(n)
                for _ in range(2):
                    w -= basis[:, :k] @ (basis[:, :k].T @ w)
                beta_next = 0.0
                q = w / np.linalg.norm(w)
            else:
                beta_next = beta
                q = w / beta
            betas.append(beta_next)
            beta_prev = beta_next
        t = np.diag(alphas) + np.diag(betas[: k - 1], 1) + np.diag(betas[: k - 1], -1)
        theta, s = np.linalg.eigh(t)
        vecs = basis[:, :k] @ s[:, :r]
        vals = theta[:r]
        # Rayleigh-Ritz against the true operator removes drift in the tridiagonal
        qv, _ = np.linalg.qr(vecs)
        h = qv.T @ mat @ qv
        h = 0.5 * (h + h.T)
        theta2, s2 = np.linalg.eigh(h)
        vecs = qv @ s2
        vals = theta2
        worst = float(residuals(mat, vals, vecs).max())
        if worst <= tol:
            return vals, vecs
        if k == n:
            break
        target = min(n, target + r)
    raise EigenSolverError(f"Lanczos did not converge for r={r}", worst)


def eig_smallest(l_sym: np.ndarray, r: int, method: str = "auto", seed: int = 0) -> SpectralBasis:
    """The ``r`` smallest eigenpairs of a symmetric matrix.

    ``method`` is ``"dense"`` (LAPACK), ``"lanczos"``, ``"jacobi"`` or
    ``"auto"`` (dense up to 2000 rows). ``r`` larger than the matrix is clamped
    with a warning.
    """
    mat = np.asarray(l_sym, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if asym > 1e-10:
        raise ValueError(f"matrix is not symmetric (max |A - Aᵀ| = {asym:.3e})")
    n = mat.shape[0]
    if r < 1:
        raise ValueError(f"r must be positive, got {r}")
    if r > n:
        logger.warning("requested %d eigenpairs of a %d-node graph; clamping to %d", r, n, n)
        r = n
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"

    if method == "dense":
        vals, vecs = np.linalg.eigh(mat)
        vals, vecs = vals[:r], vecs[:, :r]
    elif method == "jacobi":
        vals, vecs = jacobi_eigh(mat)
        vals, vecs = vals[:r], vecs[:, :r]
    elif method == "lanczos":
        vals, vecs = lanczos_smallest(mat, r, seed=seed)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")

    worst = float(residuals(mat, vals, vecs).max())
    if worst > RESIDUAL_TOL:
        raise EigenSolverError(f"{method} eigensolver failed the residual contract", worst)
    vecs = fix_signs(vecs)
    return SpectralBasis(phi=np.ascontiguousarray(vecs), lam=np.ascontiguousarray(vals))
