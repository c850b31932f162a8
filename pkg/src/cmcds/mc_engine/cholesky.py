import numpy as np


class CholeskyError(np.linalg.LinAlgError):
    pass


def cholesky(Q, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``C`` with ``C @ C.T == Q`` for a correlation matrix.

    Pivots within ``tol`` of zero (semidefinite input) get a zero column,
    provided the remaining residual in that column is also within tolerance;
    a pivot below ``-tol`` or an inconsistent residual means ``Q`` is
    indefinite.
    """
    Q = np.array(Q, dtype=float)
    n = Q.shape[0]
    if Q.shape != (n, n):
        raise ValueError("correlation matrix must be square")
    if not np.all(np.isfinite(Q)):
        raise ValueError("correlation matrix has non-finite entries")
    if not np.allclose(Q, Q.T, atol=1e-12, rtol=0):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(Q), 1.0, atol=1e-12, rtol=0):
        raise ValueError("correlation matrix must have a unit diagonal")
    C = np.zeros_like(Q)
    for k in range(n):
        pivot = Q[k, k] - C[k, :k] @ C[k, :k]
        col = Q[k + 1 :, k] - C[k + 1 :, :k] @ C[k, :k]
        if pivot < -tol:
            raise CholeskyError(f"matrix is indefinite (pivot {pivot:.3g} at {k})")
        if pivot <= tol:
            if col.size and np.max(np.abs(col)) > np.sqrt(tol):
                raise CholeskyError(f"matrix is indefinite (zero pivot with residual at {k})")
            continue
        C[k, k] = np.sqrt(pivot)
        C[k + 1 :, k] = col / C[k, k]
    return C
