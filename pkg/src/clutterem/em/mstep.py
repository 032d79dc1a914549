"""Closed-form and cyclic M-steps for H0, H11, H12 and H13."""

import numpy as np

from ..numerics import LOADING, cholesky, hermitian_eig, hermitize, psd_sqrt_pair
from .model import whiten

#: Classes whose total responsibility falls below this are treated as empty.
EMPTY_MASS = 1e-12


def m_step_priors(Q):
    """Prior update: column means of the responsibility matrix."""
    return np.mean(Q, axis=-2)


def weighted_scatter(Z, W):
    """``S_j = sum_k W[k, j] z_k z_k^H`` for every column ``j`` of ``W``.

    ``Z`` is ``(..., K, N)``, ``W`` is ``(..., K, J)``; returns ``(..., J, N, N)``.
    """
    X = W[..., :, :, None] * Z[..., :, None, :]
    return np.moveaxis(X, -3, -1) @ np.conj(Z)[..., None, :, :]


def ensure_pd(M, loading=LOADING):
    """Load ``loading * tr(M) / N`` onto matrices that fail Cholesky."""
    try:
        np.linalg.cholesky(M)
        return M
    except np.linalg.LinAlgError:
        pass
    n = M.shape[-1]
    flat = M.reshape(-1, n, n).copy()
    for i, A in enumerate(flat):
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            flat[i] = A + (loading * max(np.real(np.trace(A)), 0.0) / n) * np.eye(n)
    return flat.reshape(M.shape)


def _normalize(S, mass, M_prev):
    safe = np.where(mass > EMPTY_MASS, mass, 1.0)
    M = S / safe[..., None, None]
    if M_prev is not None:
        M = np.where((mass > EMPTY_MASS)[..., None, None], M, M_prev)
    return hermitize(M)


def m_step_h0(Z, Q, M_prev=None):
    """Weighted sample covariance per class.

    ``M_l = sum_k q_k(l) z_k z_k^H / sum_k q_k(l)``. Classes with no mass keep
    ``M_prev``; matrices that are numerically singular get diagonal loading.
    """
    L = M_prev.shape[-3] if M_prev is not None else Q.shape[-1]
    q = Q[..., :L]
    return ensure_pd(_normalize(weighted_scatter(Z, q), q.sum(axis=-2), M_prev))


def _rel_frobenius(new, old):
    num = np.sqrt(np.sum(np.abs(new - old) ** 2, axis=(-2, -1)))
    den = np.sqrt(np.sum(np.abs(old) ** 2, axis=(-2, -1)))
    return np.max(num / den, axis=-1)


def _rel_vector(new, old):
    num = np.linalg.norm(new - old, axis=-1)
    den = np.linalg.norm(old, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(den > 0, out, np.where(num > 0, np.inf, 0.0))


def m_step_h11(Z, Q, alpha, v, M_prev, m_max=5, delta=1e-4):
    """Cyclic covariance / amplitude update for deterministic targets.

    Alternates

    * ``M_l <- sum_{s,k} q_k(Ls+l) (z_k - a_{s,k} v)(z_k - a_{s,k} v)^H / sum_{s,k} q_k(Ls+l)``
    * ``a_{1,k} <- sum_l q_k(L+l) v^H M_l^-1 z_k / sum_l q_k(L+l) v^H M_l^-1 v``

    starting from the previous amplitudes and covariances, until the summed
    relative change of ``M`` (worst region, Frobenius) and of the amplitude
    vector drops below ``delta`` or ``m_max`` passes are done. Batch elements
    stop independently.

    Returns
    -------
    M : ndarray (..., L, N, N)
    alpha : ndarray (..., K)
    passes : ndarray of int (...)
        Inner passes performed per batch element.
    """
    L = Q.shape[-1] // 2
    q0, q1 = Q[..., :L], Q[..., L:]
    mass = np.sum(q0 + q1, axis=-2)
    S0 = weighted_scatter(Z, q0)
    batch = Q.shape[:-2]
    active = np.ones(batch, dtype=bool)
    passes = np.zeros(batch, dtype=int)
    M_cur, a_cur = M_prev, alpha
    for _ in range(m_max):
        Y = Z - a_cur[..., None] * v
        M_new = ensure_pd(_normalize(S0 + weighted_scatter(Y, q1), mass, M_cur))
        w = whiten(Z, M_new, v)
        num = np.einsum("...kl,...lk->...k", q1, w.vMz)
        den = q1 @ w.a[..., :, None]
        den = den[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            a_new = np.where(den > 0, num / den, 0.0)
        omega = _rel_frobenius(M_new, M_cur) + _rel_vector(a_new, a_cur)
        M_cur = np.where(active[..., None, None, None], M_new, M_cur)
        a_cur = np.where(active[..., None], a_new, a_cur)
        passes += active
        active = active & ~(omega < delta)
        if not active.any():
            break
    return M_cur, a_cur, passes


def _poly_times_linear(c, r):
    """Coefficients (ascending) of ``c(y) * (1 + r y)``, vectorized over rows."""
    out = np.zeros(c.shape[:-1] + (c.shape[-1] + 1,))
    out[..., :-1] += c
    out[..., 1:] += r[..., None] * c
    return out


def _polyval(c, y):
    acc = np.zeros(np.broadcast_shapes(c.shape[:-1], y.shape[:-1]) + y.shape[-1:], dtype=y.dtype)
    for j in range(c.shape[-1] - 1, -1, -1):
        acc = acc * y + c[..., j, None]
    return acc


def sigma_objective(x, weights, a, b):
    """``h(x) = sum_l w_l [log(1 + x a_l) - x b_l / (1 + x a_l)]`` (constants dropped).

    ``x`` has shape ``(..., M)`` (``M`` evaluation points); the other inputs
    are ``(..., L)``.
    """
    xa = x[..., :, None] * a[..., None, :]
    terms = np.log1p(xa) - x[..., :, None] * b[..., None, :] / (1.0 + xa)
    return np.sum(weights[..., None, :] * terms, axis=-1)


def solve_sigma(weights, a, b, upper=None):
    """Target power minimizing ``sigma_objective`` over ``[0, upper]``.

    Stationary points are the real roots of the numerator of the derivative,
    ``sum_l w_l (a_l^2 x + a_l - b_l) prod_{j != l} (1 + a_j x)^2``, a
    polynomial of degree ``2L - 1``. Those inside the interval compete with
    both end points; ties go to the smaller power. Zero total weight returns 0.

    Parameters
    ----------
    weights, a, b : array_like, shape (..., L)
        ``q_k(L+l)``, ``v^H M_l^-1 v`` (positive) and ``|z_k^H M_l^-1 v|^2``.
    upper : array_like, optional, shape (...)
        Search bound. Defaults to ``1e3 * max_l b_l / a_l^2``, which lies
        beyond every stationary point.
    """
    w = np.asarray(weights, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w, a, b = np.broadcast_arrays(w, a, b)
    L = a.shape[-1]
    if upper is None:
        upper = 1e3 * np.max(b / a ** 2, axis=-1)
    upper = np.maximum(np.broadcast_to(np.asarray(upper, dtype=float), a.shape[:-1]),
                       np.finfo(float).tiny)

    if L == 1:
        roots = ((b - a) / a ** 2)
    else:
        # work in y = a_max * x so the coefficients stay O(1)
        scale = np.max(a, axis=-1)
        r = a / scale[..., None]
        beta = b / a
        coef = np.zeros(a.shape[:-1] + (2 * L,))
        for l in range(L):
            P = np.ones(a.shape[:-1] + (1,))
            for j in range(L):
                if j != l:
                    P = _poly_times_linear(P, r[..., j])
                    P = _poly_times_linear(P, r[..., j])
            term = (1.0 - beta[..., l, None]) * np.concatenate([P, np.zeros(P.shape[:-1] + (1,))], -1)
            term[..., 1:] += r[..., l, None] * P
            coef += (w[..., l] * a[..., l])[..., None] * term
        lead = coef[..., -1]
        ok = lead > 0
        monic = coef[..., :-1] / np.where(ok, lead, 1.0)[..., None]
        d = 2 * L - 1
        comp = np.zeros(a.shape[:-1] + (d, d))
        comp[..., np.arange(1, d), np.arange(d - 1)] = 1.0
        comp[..., :, -1] = -monic
        y = np.linalg.eigvals(comp)
        y = np.where(np.abs(y.imag) <= 1e-6 * (1.0 + np.abs(y.real)), y.real, np.nan)
        dcoef = coef[..., 1:] * np.arange(1, 2 * L)
        for _ in range(3):
            fy, dfy = _polyval(coef, y), _polyval(dcoef, y)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(dfy != 0, fy / dfy, 0.0)
            y = y - step
        roots = y / scale[..., None]

    cand = np.where((roots > 0) & (roots < upper[..., None]), roots, np.nan)
    cand = np.concatenate([np.zeros(cand.shape[:-1] + (1,)), upper[..., None], cand], axis=-1)
    with np.errstate(invalid="ignore"):
        h = sigma_objective(np.nan_to_num(cand, nan=0.0), w, a, b)
    h = np.where(np.isnan(cand), np.inf, h)
    best = np.min(h, axis=-1, keepdims=True)
    # among tied minima take the smallest power
    tied = h <= best
    out = np.min(np.where(tied, cand, np.inf), axis=-1)
    return np.where(np.sum(w, axis=-1) > 0, out, 0.0)


def m_step_h12(Z, Q, v, M_prev):
    """Covariances from clutter-only responsibilities, then per-bin target power."""
    L = Q.shape[-1] // 2
    q0, q1 = Q[..., :L], Q[..., L:]
    M = ensure_pd(_normalize(weighted_scatter(Z, q0), q0.sum(axis=-2), M_prev))
    w = whiten(Z, M, v)
    b = np.swapaxes(w.vMz.real ** 2 + w.vMz.imag ** 2, -1, -2)   # (..., K, L)
    a = np.broadcast_to(w.a[..., None, :], b.shape)
    energy = np.max(np.sum(np.abs(Z) ** 2, axis=-1), axis=-1)
    upper = 1e3 * energy * np.max(1.0 / w.a, axis=-1)
    upper = np.broadcast_to(upper[..., None], b.shape[:-1])
    return M, solve_sigma(q1, a, b, upper)


def _rank_one_fit(M, S, mass):
    """Best rank-one PSD ``R`` for ``q log det(M + R) + Tr[(M + R)^-1 S]``."""
    C = cholesky(M)
    Ci = np.linalg.inv(C)
    W = hermitize(Ci @ S @ np.conj(np.swapaxes(Ci, -1, -2)))
    W = W / np.where(mass > EMPTY_MASS, mass, 1.0)[..., None, None]
    mu, U = hermitian_eig(W)
    g = C @ U[..., :, 0:1]
    gain = np.maximum(mu[..., 0] - 1.0, 0.0) * (mass > EMPTY_MASS)
    return gain[..., None, None] * (g @ np.conj(np.swapaxes(g, -1, -2)))


def m_step_h13(Z, Q, M_prev):
    """Joint closed-form update of clutter covariances and swarm matrices.

    With weighted scatters ``S_l`` (clutter-only) and ``S_{l+L}`` (target)
    and masses ``q_l``, ``q_{l+L}``, diagonalize
    ``S_l^{-1/2} S_{l+L} S_l^{-1/2} = V diag(gamma) V^H`` (gamma descending),
    set ``B = S_l^{1/2} V``, ``lam = max(q_l gamma_1 / q_{l+L}, 1)`` and
    ``d_i^2 = (q_l + q_{l+L}) / (lam_i + gamma_i)`` where ``lam_1 = lam`` and
    ``lam_i = 1`` otherwise. Then ``M = B D^-1 Lam^-1 D^-1 B^H`` and
    ``M + R = B D^-2 B^H``, so ``R`` has rank one.

    A target class without mass gives ``R = 0`` and the pooled covariance; a
    clutter class without mass keeps ``M_prev`` and fits ``R`` on top of it.
    """
    L = Q.shape[-1] // 2
    n = Z.shape[-1]
    q0, q1 = Q[..., :L], Q[..., L:]
    m0, m1 = q0.sum(axis=-2), q1.sum(axis=-2)
    S0, S1 = weighted_scatter(Z, q0), weighted_scatter(Z, q1)
    empty0 = m0 <= EMPTY_MASS
    has_swarm = m1 > EMPTY_MASS
    S0_safe = np.where(empty0[..., None, None], np.eye(n), S0)

    root, inv_root = psd_sqrt_pair(S0_safe)
    gamma, V = hermitian_eig(hermitize(inv_root @ S1 @ inv_root))
    gamma = np.clip(gamma, 0.0, None)
    B = root @ V
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(has_swarm, np.maximum(m0 * gamma[..., 0] / np.where(has_swarm, m1, 1.0), 1.0), 1.0)
    lam_vec = np.ones_like(gamma)
    lam_vec[..., 0] = lam
    dd = (m0 + m1)[..., None] / (lam_vec + gamma)
    Bh = np.conj(np.swapaxes(B, -1, -2))
    M = hermitize((B / (dd * lam_vec)[..., None, :]) @ Bh)
    b1 = B[..., :, 0:1]
    R = ((1.0 - 1.0 / lam) / dd[..., 0])[..., None, None] * (b1 @ np.conj(np.swapaxes(b1, -1, -2)))

    if np.any(empty0):
        if M_prev is None:
            raise ValueError("an empty clutter class needs the previous covariance")
        R_keep = _rank_one_fit(M_prev, S1, m1)
        M = np.where(empty0[..., None, None], M_prev, M)
        R = np.where(empty0[..., None, None], R_keep, R)
    return ensure_pd(M), hermitize(R)
