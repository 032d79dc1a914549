"""Complex Hermitian linear-algebra kernels.

Every function accepts either a single ``(N, N)`` matrix or a stack with
arbitrary leading batch dimensions ``(..., N, N)``. Eigenvalues are always
returned in descending order.
"""

import numpy as np
from scipy.linalg import lapack

from .errors import DomainError, InvalidInputError, SingularMatrixError

#: Relative diagonal loading applied when a Cholesky factorization fails.
LOADING = 1e-8
#: Negative eigenvalues down to ``-PSD_TOL * lambda_max`` are clamped to zero.
PSD_TOL = 1e-10


def _check_finite(H):
    if not np.all(np.isfinite(H)):
        raise InvalidInputError("matrix has non-finite entries")


def hermitize(H):
    """Return ``(H + H^H) / 2``."""
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def is_hermitian(H, rtol=1e-12):
    H = np.asarray(H)
    scale = np.max(np.abs(H), initial=0.0)
    diff = np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2))), initial=0.0)
    return diff <= rtol * max(scale, np.finfo(float).tiny)


def hermitian_eig(H):
    """Eigendecomposition ``H = U diag(w) U^H`` with ``w`` descending.

    Returns
    -------
    w : ndarray, real, shape (..., N)
    U : ndarray, complex, shape (..., N, N)
        Columns are the eigenvectors matching ``w``.
    """
    H = np.asarray(H)
    _check_finite(H)
    w, U = np.linalg.eigh(H)
    return w[..., ::-1], U[..., ::-1]


def _clamped_eig(H):
    w, U = hermitian_eig(H)
    top = np.maximum(w[..., :1], 0.0)
    if np.any(w < -PSD_TOL * top):
        raise DomainError("matrix is indefinite")
    return np.clip(w, 0.0, None), U


def psd_sqrt(H):
    """Hermitian PSD square root ``R`` with ``R @ R == H``."""
    w, U = _clamped_eig(H)
    return hermitize((U * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2)))


def psd_sqrt_pair(H, loading=LOADING):
    """Return ``(H^{1/2}, H^{-1/2})`` for a PSD ``H``.

    Eigenvalues below ``loading * tr(H) / N`` are raised to that floor before
    the inverse root is taken, so near-singular weighted scatter matrices
    still yield a finite whitening transform.
    """
    w, U = _clamped_eig(H)
    n = w.shape[-1]
    floor = loading * np.sum(w, axis=-1, keepdims=True) / n
    w = np.maximum(w, np.maximum(floor, np.finfo(float).tiny))
    Uh = np.conj(np.swapaxes(U, -1, -2))
    root = (U * np.sqrt(w)[..., None, :]) @ Uh
    inv_root = (U / np.sqrt(w)[..., None, :]) @ Uh
    return hermitize(root), hermitize(inv_root)


def _potrf(A):
    c, info = lapack.zpotrf(A, lower=1, clean=1)
    return c, info


def cholesky(H, loading=LOADING):
    """Lower Cholesky factor of a positive definite matrix or stack.

    Matrices whose factorization fails are loaded with
    ``loading * tr(H) / N`` on the diagonal and retried once.

    Raises
    ------
    SingularMatrixError
        If a matrix is still not positive definite after loading.
    """
    H = np.asarray(H, dtype=complex)
    _check_finite(H)
    try:
        return np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        pass
    n = H.shape[-1]
    flat = H.reshape(-1, n, n)
    out = np.empty_like(flat)
    eye = np.eye(n)
    for i, A in enumerate(flat):
        c, info = _potrf(A)
        if info > 0:
            tr = np.real(np.trace(A))
            c, info = _potrf(A + (loading * max(tr, 0.0) / n) * eye)
        if info != 0:
            raise SingularMatrixError(
                f"matrix {i} not positive definite (leading minor {info})",
                pivot=int(info), index=i)
        out[i] = c
    return out.reshape(H.shape)


def logdet_from_cholesky(C):
    return 2.0 * np.sum(np.log(np.real(np.diagonal(C, axis1=-2, axis2=-1))), axis=-1)


def logdet_and_solve(H, B):
    """Log-determinant of ``H`` and the solution ``X`` of ``H X = B``.

    ``H`` must be positive definite (diagonal loading is attempted once).
    ``B`` may be a vector ``(..., N)`` or a matrix ``(..., N, M)``.
    """
    C = cholesky(H)
    B = np.asarray(B, dtype=complex)
    vector = B.ndim == C.ndim - 1
    rhs = B[..., None] if vector else B
    Y = np.linalg.solve(C, rhs)
    X = np.linalg.solve(np.conj(np.swapaxes(C, -1, -2)), Y)
    return logdet_from_cholesky(C), (X[..., 0] if vector else X)


def inverse_cholesky(H):
    """Return ``(logdet(H), C^{-1})`` where ``C`` is the Cholesky factor.

    ``C^{-1} z`` whitens ``z``: ``z^H H^{-1} z = ||C^{-1} z||^2``.
    """
    C = cholesky(H)
    return logdet_from_cholesky(C), np.linalg.inv(C)
