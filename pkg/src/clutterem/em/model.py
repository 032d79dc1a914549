"""Latent-class mixture model: parameters, class densities, E-step.

Class numbering follows ``c = L*s + l`` (1-based) with ``s = 0`` for
clutter-only classes and ``s = 1`` for target-bearing classes, so columns
``0..L-1`` of a responsibility matrix are clutter-only and ``L..2L-1`` carry
targets. Under H0 there are only ``L`` classes.

All arrays may carry leading batch dimensions: data ``(..., K, N)``,
responsibilities ``(..., K, Lc)``, covariances ``(..., L, N, N)``.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import DegenerateBinError
from ..numerics import inverse_cholesky

LOG_PI = np.log(np.pi)


class Hypothesis(str, Enum):
    H0 = "H0"
    H11 = "H11"
    H12 = "H12"
    H13 = "H13"

    @property
    def model_index(self):
        """1, 2 or 3 for the target hypotheses; 0 for H0."""
        return {"H0": 0, "H11": 1, "H12": 2, "H13": 3}[self.value]

    @property
    def has_targets(self):
        return self is not Hypothesis.H0

    def n_classes(self, n_regions):
        return 2 * n_regions if self.has_targets else n_regions

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        text = str(text).strip().upper().replace(",", "").replace("_", "")
        aliases = {"1": "H11", "2": "H12", "3": "H13", "0": "H0"}
        return cls(aliases.get(text, text))


#: Extra free parameters a target adds to a class: amplitude, power, rank-one matrix.
_TARGET_DOF = {1: lambda n: 2, 2: lambda n: 1, 3: lambda n: n}


def penalty(s, model, n_channels, penalty_rho=3.0):
    """Model-order penalty ``u(s) = (N^2 + k_i s)(1 + rho) / 2``."""
    k = _TARGET_DOF[model](n_channels) if s else 0
    return (n_channels ** 2 + k * s) * (1.0 + penalty_rho) / 2.0


def penalties(hypothesis, n_channels, penalty_rho=3.0):
    """``(u(0), u(1))`` for a hypothesis; H0 uses the same value twice."""
    model = max(hypothesis.model_index, 1)
    return (penalty(0, model, n_channels, penalty_rho),
            penalty(1, model, n_channels, penalty_rho))


@dataclass
class ModelParams:
    """Parameter bundle for one hypothesis.

    ``alpha`` (complex amplitude per bin) is set only under H11, ``sigma2``
    (target power per bin) only under H12 and ``swarm`` (rank-one ``R_l`` per
    region) only under H13.
    """

    hypothesis: Hypothesis
    priors: np.ndarray
    covariances: np.ndarray
    steering: np.ndarray
    alpha: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    swarm: Optional[np.ndarray] = None

    @property
    def n_regions(self):
        return self.covariances.shape[-3]

    @property
    def n_classes(self):
        return self.hypothesis.n_classes(self.n_regions)

    def copy(self, **changes):
        out = replace(self, **changes)
        for name in ("priors", "covariances", "alpha", "sigma2", "swarm"):
            val = getattr(out, name)
            if val is not None and name not in changes:
                setattr(out, name, val.copy())
        return out

    def take(self, index):
        """Select one element (or a sub-batch) of a batched bundle."""
        pick = lambda a: None if a is None else a[index]
        return ModelParams(self.hypothesis, pick(self.priors), pick(self.covariances),
                           self.steering, pick(self.alpha), pick(self.sigma2),
                           pick(self.swarm))

    def validate(self, tol=1e-10):
        """Raise ``AssertionError`` if an invariant does not hold."""
        p = self.priors
        assert p.shape[-1] == self.n_classes
        assert np.all(p >= -tol) and np.allclose(p.sum(-1), 1.0, atol=tol, rtol=0)
        M = self.covariances
        assert np.allclose(M, np.conj(np.swapaxes(M, -1, -2)), rtol=1e-12, atol=0)
        assert np.all(np.linalg.eigvalsh(M) > 0)
        if self.hypothesis is Hypothesis.H11:
            assert self.alpha is not None
        if self.hypothesis is Hypothesis.H12:
            assert self.sigma2 is not None and np.all(self.sigma2 >= 0)
        if self.hypothesis is Hypothesis.H13:
            R = self.swarm
            assert R is not None
            w = np.linalg.eigvalsh(R)[..., ::-1]
            assert np.all(w[..., 0] >= -tol * np.abs(w[..., 0]).max(initial=1.0))
            assert np.all(np.abs(w[..., 1:]) <= 1e-8 * np.maximum(np.abs(w[..., :1]), 1e-300))


@dataclass
class _Whitened:
    """Per-region quantities shared by every density under one covariance."""

    logdet: np.ndarray   # (..., L)
    quad: np.ndarray     # (..., L, K)  z^H M^-1 z
    vMz: np.ndarray      # (..., L, K)  v^H M^-1 z
    a: np.ndarray        # (..., L)     v^H M^-1 v
    inv_chol: np.ndarray  # (..., L, N, N)


def whiten(Z, M, v):
    logdet, Ci = inverse_cholesky(M)
    W = Ci @ np.swapaxes(Z, -1, -2)[..., None, :, :]
    wv = Ci @ v
    quad = np.sum(W.real ** 2 + W.imag ** 2, axis=-2)
    vMz = np.einsum("...ln,...lnk->...lk", np.conj(wv), W)
    a = np.sum(wv.real ** 2 + wv.imag ** 2, axis=-1)
    return _Whitened(logdet, quad, vMz, a, Ci)


def _gauss(logdet, quad, n):
    return -n * LOG_PI - logdet[..., None] - quad


def class_log_densities(Z, params: ModelParams, whitened=None):
    """Log density of every bin under every class, shape ``(..., K, Lc)``."""
    Z = np.asarray(Z)
    n = Z.shape[-1]
    v = params.steering
    w = whitened if whitened is not None else whiten(Z, params.covariances, v)
    base = _gauss(w.logdet, w.quad, n)  # (..., L, K)
    hyp = params.hypothesis
    if hyp is Hypothesis.H0:
        cols = [base]
    elif hyp is Hypothesis.H11:
        alpha = params.alpha[..., None, :]
        quad = (w.quad - 2.0 * np.real(np.conj(alpha) * w.vMz)
                + (alpha.real ** 2 + alpha.imag ** 2) * w.a[..., None])
        cols = [base, _gauss(w.logdet, quad, n)]
    elif hyp is Hypothesis.H12:
        s2 = params.sigma2[..., None, :]
        g = 1.0 + s2 * w.a[..., None]
        logdet = w.logdet[..., None] + np.log(g)
        quad = w.quad - s2 * (w.vMz.real ** 2 + w.vMz.imag ** 2) / g
        cols = [base, -n * LOG_PI - logdet - quad]
    else:
        wt = whiten(Z, params.covariances + params.swarm, v)
        cols = [base, _gauss(wt.logdet, wt.quad, n)]
    return np.swapaxes(np.concatenate(cols, axis=-2), -1, -2)


def class_log_density(z, label, params: ModelParams, k=0):
    """Log density of snapshot ``z`` under 1-based class ``label``.

    ``k`` (0-based) selects the bin's amplitude or power when the bundle
    carries per-bin target parameters.
    """
    z = np.asarray(z)[None, :]
    sub = params.copy(
        alpha=None if params.alpha is None else np.atleast_1d(params.alpha)[[k]],
        sigma2=None if params.sigma2 is None else np.atleast_1d(params.sigma2)[[k]])
    return float(class_log_densities(z, sub)[0, label - 1])


def _log_weights(params, u):
    p = params.priors
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    if params.hypothesis.has_targets:
        L = params.n_regions
        logp = logp - np.repeat(np.asarray(u, dtype=float), L)
    return logp


def _logsumexp(x, axis=-1):
    top = np.max(x, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.sum(np.exp(x - safe), axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis), top


def responsibilities(logf, params, u=(0.0, 0.0)):
    """Normalized posteriors from precomputed class log-densities."""
    logits = logf + _log_weights(params, u)[..., None, :]
    norm, top = _logsumexp(logits)
    if not np.all(np.isfinite(top)):
        bad = np.argwhere(~np.isfinite(top[..., 0]))
        raise DegenerateBinError(f"{len(bad)} bins have zero density under every class",
                                 bins=bad)
    return np.exp(logits - norm[..., None])


def e_step(Z, params: ModelParams, u=(0.0, 0.0)):
    """Penalized E-step.

    ``q_k(Ls+l)`` is proportional to ``f(z_k | Ls+l) exp(-u(s)) p_{Ls+l}``;
    rows are normalized in the log domain.
    """
    return responsibilities(class_log_densities(Z, params), params, u)


def mixture_log_likelihood(logf, params, u=None):
    """``sum_k log sum_c p_c f_c(z_k)``; the penalized variant when ``u`` is set."""
    logits = logf + (_log_weights(params, u) if u is not None
                     else _log_weights(params, (0.0, 0.0)))[..., None, :]
    return np.sum(_logsumexp(logits)[0], axis=-1)


def bin_log_mixture(Z, params: ModelParams):
    """Per-bin mixture log density ``log g(z_k)``, shape ``(..., K)``."""
    logf = class_log_densities(Z, params)
    return _logsumexp(logf + _log_weights(params, (0.0, 0.0))[..., None, :])[0]


def log_likelihood(Z, params: ModelParams):
    """Unpenalized joint log-likelihood of the data window."""
    return mixture_log_likelihood(class_log_densities(Z, params), params)
