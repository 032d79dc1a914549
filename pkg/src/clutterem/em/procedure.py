"""EM driver: initialization, iteration loop, hard classification."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import EmAbortedError, InvalidInputError, UndefinedDeltaError
from ..numerics import hermitize
from .model import (Hypothesis, ModelParams, class_log_densities, mixture_log_likelihood,
                    penalties, responsibilities, whiten)
from .mstep import ensure_pd, m_step_h0, m_step_h11, m_step_h12, m_step_h13, m_step_priors


@dataclass(frozen=True)
class EmConfig:
    h_max: int = 15
    m_max: int = 5
    delta: float = 1e-4
    penalty_rho: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.h_max < 1 or self.m_max < 1 or not self.delta > 0:
            raise InvalidInputError("need h_max >= 1, m_max >= 1 and delta > 0")


@dataclass
class EmTrace:
    """Per-iteration log-likelihoods of one EM run.

    Index ``h`` holds the value after ``h`` iterations (``h = 0`` is the
    initial point). ``objective`` is the penalized log-likelihood
    ``sum_k log sum_c p_c exp(-u(s_c)) f_c(z_k)``, the quantity the penalized
    E-step and the M-steps jointly ascend; convergence deltas are taken on it.
    ``loglik`` is the plain mixture log-likelihood of the same parameters.
    """

    objective: np.ndarray
    loglik: np.ndarray
    inner_passes: Optional[np.ndarray] = None

    @property
    def deltas(self):
        """``|(L(h) - L(h-1)) / L(h)|`` for ``h = 1..h_max``."""
        return relative_deltas(self.objective)


def relative_deltas(values):
    cur, prev = values[..., 1:], values[..., :-1]
    if np.any(cur == 0):
        raise UndefinedDeltaError("log-likelihood is exactly zero")
    return np.abs((cur - prev) / cur)


def _global_scm(Z):
    return hermitize(np.swapaxes(Z, -1, -2) @ np.conj(Z)) / Z.shape[-2]


def _energy_split(Z, L):
    """Sample covariances of ``L`` equal groups of bins ranked by energy."""
    energy = np.sum(np.abs(Z) ** 2, axis=-1)
    order = np.argsort(energy, axis=-1, kind="stable")
    groups = np.array_split(np.arange(Z.shape[-2]), L)
    out = []
    for g in groups:
        sel = np.take_along_axis(Z, order[..., g, None], axis=-2)
        out.append(_global_scm(sel))
    return ensure_pd(np.stack(out, axis=-3))


def initialize(Z, hypothesis, n_regions, v, seed=None, covariance_init="energy"):
    """Starting point for EM.

    Priors are uniform over the ``Lc`` classes. By default the bins are ranked
    by energy and split into ``L`` equal groups whose sample covariances seed
    ``M_1..M_L``; ``covariance_init="spread"`` instead offsets the global
    sample covariance, ``M_l = SCM + l * tr(SCM) / (N L) * I``.
    H11 amplitudes start at the matched-filter estimate of largest modulus
    over regions, H12 powers at ``|z_k^H v|^2``, and H13 swarm matrices at the
    outer products of the ``L`` strongest snapshots.

    ``seed`` is accepted for interface stability; these recipes are
    deterministic.
    """
    Z = np.asarray(Z, dtype=complex)
    hypothesis = Hypothesis(hypothesis)
    batch, N = Z.shape[:-2], Z.shape[-1]
    L = n_regions
    Lc = hypothesis.n_classes(L)
    if covariance_init == "energy":
        M = _energy_split(Z, L)
    elif covariance_init == "spread":
        scm = _global_scm(Z)
        step = np.real(np.trace(scm, axis1=-2, axis2=-1)) / (N * L)
        ls = np.arange(1, L + 1, dtype=float)
        M = scm[..., None, :, :] + (step[..., None] * ls)[..., None, None] * np.eye(N)
    else:
        raise InvalidInputError(f"unknown covariance init {covariance_init!r}")
    priors = np.full(batch + (Lc,), 1.0 / Lc)
    params = ModelParams(hypothesis, priors, M, np.asarray(v, dtype=complex))
    if hypothesis is Hypothesis.H11:
        w = whiten(Z, M, params.steering)
        est = w.vMz / w.a[..., None]       # (..., L, K)
        pick = np.argmax(np.abs(est), axis=-2)
        params.alpha = np.take_along_axis(est, pick[..., None, :], axis=-2)[..., 0, :]
    elif hypothesis is Hypothesis.H12:
        params.sigma2 = np.abs(Z @ np.conj(params.steering)) ** 2
    elif hypothesis is Hypothesis.H13:
        energy = np.sum(np.abs(Z) ** 2, axis=-1)
        order = np.argsort(-energy, axis=-1, kind="stable")[..., :L]
        top = np.take_along_axis(Z, order[..., None], axis=-2)   # (..., L, N)
        params.swarm = top[..., :, None] * np.conj(top[..., None, :])
    return params


def _m_step(Z, Q, params, config):
    hyp = params.hypothesis
    new = params.copy(priors=m_step_priors(Q))
    passes = None
    if hyp is Hypothesis.H0:
        new.covariances = m_step_h0(Z, Q, params.covariances)
    elif hyp is Hypothesis.H11:
        new.covariances, new.alpha, passes = m_step_h11(
            Z, Q, params.alpha, params.steering, params.covariances,
            m_max=config.m_max, delta=config.delta)
    elif hyp is Hypothesis.H12:
        new.covariances, new.sigma2 = m_step_h12(Z, Q, params.steering, params.covariances)
    else:
        new.covariances, new.swarm = m_step_h13(Z, Q, params.covariances)
    return new, passes


def run_em(Z, hypothesis, config: EmConfig, init: ModelParams):
    """Penalized EM for one hypothesis.

    Runs exactly ``config.h_max`` E/M cycles. ``Z`` may be a single window
    ``(K, N)`` or a batch ``(B, K, N)`` of independent windows, in which case
    ``init`` must be batched the same way and all outputs carry the batch axis.

    Returns
    -------
    params : ModelParams
        Estimates after the last M-step.
    Q : ndarray (..., K, Lc)
        Responsibilities recomputed from the final estimates.
    trace : EmTrace

    Raises
    ------
    EmAbortedError
        When an iteration fails; ``state`` holds the last valid parameters.
    """
    Z = np.asarray(Z, dtype=complex)
    hypothesis = Hypothesis(hypothesis)
    if init.hypothesis is not hypothesis:
        raise InvalidInputError(f"initial point is for {init.hypothesis.value}")
    u = penalties(hypothesis, Z.shape[-1], config.penalty_rho)
    batch = Z.shape[:-2]
    ll = np.empty(batch + (config.h_max + 1,))
    pen = np.empty_like(ll)
    passes = np.zeros(batch + (config.h_max,), dtype=int)
    params = init
    for h in range(config.h_max + 1):
        try:
            logf = class_log_densities(Z, params)
            ll[..., h] = mixture_log_likelihood(logf, params)
            pen[..., h] = mixture_log_likelihood(logf, params, u)
            Q = responsibilities(logf, params, u)
            if h == config.h_max:
                break
            params, inner = _m_step(Z, Q, params, config)
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            raise EmAbortedError(f"{hypothesis.value} iteration {h + 1} failed: {exc}",
                                 state=params, iteration=h) from exc
        if inner is not None:
            passes[..., h] = inner
    trace = EmTrace(pen, ll, passes if hypothesis is Hypothesis.H11 else None)
    return params, Q, trace


@dataclass
class Classification:
    """Hard labels derived from responsibilities.

    ``labels`` are 1-based classes, ``regions`` 1-based clutter regions and
    ``target_bins`` the 1-based bins declared to hold a target.
    """

    labels: np.ndarray
    regions: np.ndarray
    target_flags: np.ndarray

    @property
    def target_bins(self):
        return set((np.flatnonzero(self.target_flags) + 1).tolist())


def classify(Q, n_regions, targets_declared=True):
    """Maximum-posterior labels with ties resolved toward the lowest class.

    With ``targets_declared=False`` (the detector decided H0) no bin is
    reported as a target whatever ``Q`` says.
    """
    Q = np.asarray(Q)
    labels = np.argmax(Q, axis=-1) + 1
    regions = (labels - 1) % n_regions + 1
    flags = labels > n_regions
    if not targets_declared:
        flags = np.zeros_like(flags)
    return Classification(labels, regions, flags)
