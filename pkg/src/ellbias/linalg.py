"""Small dense linear-algebra helpers: vec/vech, duplication, Cholesky wrappers.

Conventions: ``vec`` is column-major; ``vech`` stacks the diagonal and
superdiagonal elements column by column (upper-triangle order), so for a
3x3 symmetric M the order is (1,1), (1,2), (2,2), (1,3), (2,3), (3,3).
"""

from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import LinAlgError


def vec(m):
    """Stack the columns of a matrix into a vector."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v, q):
    """Inverse of :func:`vec` for a q x q matrix."""
    return np.asarray(v).reshape((q, q), order="F")


def kron(a, b):
    """Kronecker product for small 2-D arrays (faster than np.kron here)."""
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


@lru_cache(maxsize=64)
def vech_indices(q):
    """(row, col) index arrays of the upper triangle in vech order."""
    rows, cols = [], []
    for j in range(q):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def vech(m):
    """Half-vectorize a symmetric matrix (diagonal + superdiagonal, by columns)."""
    m = np.asarray(m)
    r, c = vech_indices(m.shape[0])
    return m[r, c].copy()


def unvech(v, q=None):
    """Build the symmetric q x q matrix whose vech equals ``v``."""
    v = np.asarray(v, dtype=float)
    if q is None:
        q = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if q * (q + 1) // 2 != v.size:
        raise ValueError(f"vech length {v.size} does not match any square size")
    m = np.zeros((q, q))
    r, c = vech_indices(q)
    m[r, c] = v
    m[c, r] = v
    return m


def duplication_matrix(q):
    """D with vec(M) = D @ vech(M) for symmetric q x q M."""
    d = np.zeros((q * q, q * (q + 1) // 2))
    r, c = vech_indices(q)
    for k in range(r.size):
        i, j = r[k], c[k]
        d[j * q + i, k] = 1.0
        d[i * q + j, k] = 1.0
    return d


@lru_cache(maxsize=64)
def symmetric_basis(q):
    """Symmetric basis matrices E_k with vech(E_k) = e_k (treat as read-only)."""
    out = []
    r, c = vech_indices(q)
    for k in range(r.size):
        e = np.zeros((q, q))
        e[r[k], c[k]] = 1.0
        e[c[k], r[k]] = 1.0
        out.append(e)
    return tuple(out)


def commutation_matrix(q):
    """K with K @ vec(A) = vec(A.T) for q x q A."""
    k = np.zeros((q * q, q * q))
    for i in range(q):
        for j in range(q):
            k[j * q + i, i * q + j] = 1.0
    return k


def chol_pd(sigma):
    """Lower Cholesky factor; raises :class:`LinAlgError` if not PD."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(f"matrix is not positive definite: {exc}") from exc


def chol_logdet(lower):
    """log|Sigma| from its lower Cholesky factor."""
    return 2.0 * np.sum(np.log(np.diag(lower)))


def inv_from_chol(lower):
    """Sigma^{-1} from the lower Cholesky factor of Sigma."""
    q = lower.shape[0]
    return cho_solve((lower, True), np.eye(q), check_finite=False)


def solve_spd(a, b):
    """Solve a @ x = b for symmetric positive definite a via Cholesky."""
    try:
        c = cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(f"SPD solve failed: {exc}") from exc
    return cho_solve(c, b, check_finite=False)
