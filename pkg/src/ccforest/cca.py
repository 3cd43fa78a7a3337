"""Canonical correlation analysis.

``cca_stable`` is the rank-reducing QR/SVD solver used during tree growth.
``cca_oracle`` solves the covariance eigenproblem directly and exists only
so the stable path can be checked against something independent.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

DEFAULT_EPSILON = 1e-4


@dataclass(frozen=True)
class CcaConfig:
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class CcaResult:
    """Paired canonical coefficients.

    ``A`` is d x nu_max and ``B`` is k x nu_max; column ``i`` of each gives the
    i-th pair of projections, with correlation ``rho[i]``.
    """

    A: np.ndarray
    B: np.ndarray
    rho: np.ndarray
    rank_w: int
    rank_v: int

    @property
    def n_components(self):
        return len(self.rho)


def _pivoted_qr(M):
    # geqp3 picks the first maximal column norm, i.e. lowest index on ties
    q, r, p = la.qr(M, mode="economic", pivoting=True, check_finite=False)
    return q, r, p


def _numerical_rank(r, epsilon):
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    keep = diag > epsilon * diag[0]
    # the pivoted diagonal is non-increasing, so the kept set is a prefix
    return int(np.argmin(keep)) if not keep.all() else int(keep.size)


def cca_stable(W, V, cfg=None):
    """Numerically stable CCA of ``W`` (n x d) against ``V`` (n x k).

    Both inputs are centred and reduced to full column rank by a pivoted QR,
    keeping diagonal entries with ``|r_ii| > epsilon * |r_11|``. The canonical
    directions come from an SVD of the product of the two orthonormal bases,
    mapped back to coefficients by triangular back substitution. Columns
    dropped by the rank reduction get zero coefficients.
    """
    if cfg is None:
        cfg = CcaConfig()
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if V.ndim == 1:
        V = V[:, None]
    n, d = W.shape
    if V.shape[0] != n:
        raise ValueError(f"row mismatch: W has {n} rows, V has {V.shape[0]}")
    if n < 2:
        raise ValueError("cca needs at least two rows")
    if d < 1 or V.shape[1] < 1:
        raise ValueError("cca needs at least one column in each input")
    if not (np.isfinite(W).all() and np.isfinite(V).all()):
        raise ValueError("cca inputs must be finite")
    k = V.shape[1]

    W = W - W.mean(axis=0)
    V = V - V.mean(axis=0)

    qw, rw, pw = _pivoted_qr(W)
    qv, rv, pv = _pivoted_qr(V)
    zw = _numerical_rank(rw, cfg.epsilon)
    zv = _numerical_rank(rv, cfg.epsilon)
    nu = min(zw, zv)
    if nu == 0:
        return CcaResult(np.zeros((d, 0)), np.zeros((k, 0)), np.zeros(0), zw, zv)

    qw = qw[:, :zw]
    qv = qv[:, :zv]
    rw = rw[:zw, :zw]
    rv = rv[:zv, :zv]

    if zw > zv:
        u, omega, zt = la.svd(qw.T @ qv, full_matrices=False, check_finite=False)
        z = zt.T
    else:
        z, omega, ut = la.svd(qv.T @ qw, full_matrices=False, check_finite=False)
        u = ut.T
    u = u[:, :nu]
    z = z[:, :nu]
    rho = omega[:nu]

    # sign is arbitrary; fix it so the largest-magnitude entry of u is positive
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(nu)])
    flip[flip == 0] = 1.0
    u = u * flip
    z = z * flip

    a = la.solve_triangular(rw, u, lower=False, check_finite=False)
    b = la.solve_triangular(rv, z, lower=False, check_finite=False)

    A = np.zeros((d, nu))
    B = np.zeros((k, nu))
    A[pw[:zw]] = a
    B[pv[:zv]] = b
    return CcaResult(A, B, rho, zw, zv)


def cca_oracle(W, V, max_condition=1e12):
    """Canonical correlations from the closed-form eigenproblem.

    Test-only reference: forms inv(Sww) Swv inv(Svv) Svw and returns the
    square roots of its eigenvalues, largest first. Refuses ill-conditioned
    covariances rather than returning garbage.
    """
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if V.ndim == 1:
        V = V[:, None]
    n = W.shape[0]
    Wc = W - W.mean(axis=0)
    Vc = V - V.mean(axis=0)
    sww = Wc.T @ Wc / (n - 1)
    svv = Vc.T @ Vc / (n - 1)
    swv = Wc.T @ Vc / (n - 1)
    for name, s in (("W", sww), ("V", svv)):
        c = np.linalg.cond(s)
        if not np.isfinite(c) or c > max_condition:
            raise np.linalg.LinAlgError(
                f"covariance of {name} is ill-conditioned (cond={c:.3g})"
            )
    m = np.linalg.solve(sww, swv) @ np.linalg.solve(svv, swv.T)
    ev = np.linalg.eigvals(m).real
    ev = np.sort(np.clip(ev, 0.0, None))[::-1]
    return np.sqrt(ev[: min(W.shape[1], V.shape[1])])
