"""Likelihood-ratio detectors built on the EM fits, and threshold calibration.

Two statistics compare a fitted target hypothesis against the clutter-only
fit on the same window:

* ``latent-lrt`` uses the soft mixture densities, ``sum_k log g1(z_k) -
  log g0(z_k)``;
* ``plugin-lrt`` evaluates each bin only under the class it was hard-assigned
  to, so the densities factor over the estimated partition.

Thresholds are set empirically from null (target-free) windows and a
detection is declared on strict exceedance.
"""

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .em.model import Hypothesis, ModelParams, bin_log_mixture, class_log_densities
from .errors import InsufficientCalibrationError, InternalConsistencyError, InvalidInputError

THRESHOLD_FORMAT = "clutterem-thresholds/1"


class Scheme(str, Enum):
    PLUGIN = "plugin-lrt"
    LATENT = "latent-lrt"


@dataclass(frozen=True, order=True)
class DetectorKind:
    scheme: Scheme
    hypothesis: Hypothesis

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        hyp = Hypothesis.parse(self.hypothesis)
        if not hyp.has_targets:
            raise InvalidInputError("a detector tests H0 against a target hypothesis")
        object.__setattr__(self, "hypothesis", hyp)

    @property
    def key(self):
        return f"{self.scheme.value}/{self.hypothesis.value}"

    @classmethod
    def parse(cls, text):
        scheme, _, hyp = str(text).partition("/")
        return cls(Scheme(scheme.strip()), hyp)

    def __str__(self):
        return self.key


def all_detectors(hypotheses=(Hypothesis.H11, Hypothesis.H12, Hypothesis.H13),
                  schemes=(Scheme.PLUGIN, Scheme.LATENT)):
    return [DetectorKind(s, h) for h in hypotheses for s in schemes]


def latent_lrt_statistic(Z, params_h1: ModelParams, params_h0: ModelParams):
    """Log ratio of the fitted mixture likelihoods (no penalty terms).

    Batched inputs give one statistic per window.
    """
    if params_h0.hypothesis is not Hypothesis.H0:
        raise InvalidInputError("params_h0 must be an H0 fit")
    return np.sum(bin_log_mixture(Z, params_h1) - bin_log_mixture(Z, params_h0), axis=-1)


def _partition_log_density(Z, labels, params):
    labels = np.asarray(labels)
    n_classes = params.n_classes
    if labels.shape != Z.shape[:-1]:
        raise InternalConsistencyError("one label per range bin is required")
    if np.any(labels < 1) or np.any(labels > n_classes):
        raise InternalConsistencyError(
            f"labels reference classes outside 1..{n_classes} of {params.hypothesis.value}")
    needed = {Hypothesis.H11: "alpha", Hypothesis.H12: "sigma2", Hypothesis.H13: "swarm"}
    attr = needed.get(params.hypothesis)
    if attr and getattr(params, attr) is None and np.any(labels > params.n_regions):
        raise InternalConsistencyError(f"target-labeled bins but no {attr} estimate")
    logf = class_log_densities(Z, params)
    return np.sum(np.take_along_axis(logf, labels[..., None] - 1, axis=-1)[..., 0], axis=-1)


def plugin_lrt_statistic(Z, labels_h1, params_h1: ModelParams, labels_h0, params_h0: ModelParams):
    """Log ratio of the partitioned likelihoods under the H1 and H0 fits.

    ``labels_*`` are 1-based hard classes (``Classification.labels``). Each
    bin contributes the log density of its own class, without priors; a
    target-labeled bin uses its amplitude, power or the region swarm matrix.
    """
    if params_h0.hypothesis is not Hypothesis.H0:
        raise InvalidInputError("params_h0 must be an H0 fit")
    Z = np.asarray(Z)
    return (_partition_log_density(Z, labels_h1, params_h1)
            - _partition_log_density(Z, labels_h0, params_h0))


def min_calibration_runs(pfa):
    return math.ceil(100.0 / pfa - 1e-9)


def calibrate_threshold(null_statistics, pfa, enforce_size=True):
    """Order-statistic threshold from null-hypothesis statistics.

    Returns the ``ceil(n * pfa)``-th largest value, so that at most
    ``n * pfa`` null statistics strictly exceed it.

    Parameters
    ----------
    null_statistics : array_like
    pfa : float
        Target false-alarm probability in (0, 1).
    enforce_size : bool
        Require ``n >= 100 / pfa``. Disable only for small worked examples.
    """
    stats = np.asarray(null_statistics, dtype=float).ravel()
    if not 0.0 < pfa < 1.0:
        raise InvalidInputError("pfa must lie in (0, 1)")
    n = stats.size
    if n == 0 or (enforce_size and n < min_calibration_runs(pfa)):
        raise InsufficientCalibrationError(
            f"{n} null runs; at least {min_calibration_runs(pfa)} needed for pfa={pfa}")
    if not np.all(np.isfinite(stats)):
        raise InvalidInputError("null statistics must be finite")
    rank = max(1, math.ceil(n * pfa - 1e-9))
    return float(np.sort(stats)[::-1][rank - 1])


def decide(statistic, eta):
    """``True`` (H1) iff the statistic strictly exceeds the threshold."""
    out = np.asarray(statistic) > eta
    return bool(out) if out.ndim == 0 else out


def scenario_fingerprint(scenario, em_config=None):
    """Short stable hash of everything a threshold depends on.

    Target placements do not enter: thresholds are set on target-free data.
    """
    payload = {
        "n_channels": scenario.n_channels,
        "regions": [[r.bins, float(r.cnr_db), float(r.rho)] for r in scenario.regions],
        "aoa_rad": float(scenario.aoa_rad),
        "noise_power": float(scenario.noise_power),
    }
    if em_config is not None:
        payload["em"] = {k: v for k, v in asdict(em_config).items() if k != "seed"}
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ThresholdEntry:
    eta: float
    n_runs: int
    pfa: float


class ThresholdTable:
    """Calibrated thresholds keyed by detector and scenario fingerprint."""

    def __init__(self):
        self._entries = {}

    def set(self, kind: DetectorKind, fingerprint, eta, n_runs, pfa, enforce_size=True):
        if not np.isfinite(eta):
            raise InvalidInputError("threshold must be finite")
        if enforce_size and n_runs < min_calibration_runs(pfa):
            raise InsufficientCalibrationError(
                f"{n_runs} runs is below 100/pfa for pfa={pfa}")
        self._entries[(kind, str(fingerprint))] = ThresholdEntry(float(eta), int(n_runs), float(pfa))

    def get(self, kind: DetectorKind, fingerprint):
        try:
            return self._entries[(kind, str(fingerprint))]
        except KeyError:
            raise KeyError(f"no threshold for {kind} on scenario {fingerprint}") from None

    def __contains__(self, key):
        return key in self._entries

    def __len__(self):
        return len(self._entries)

    def items(self):
        return sorted(self._entries.items(), key=lambda kv: (kv[0][1], kv[0][0].key))

    def dumps(self):
        buf = io.StringIO()
        buf.write(f"# {THRESHOLD_FORMAT}\n")
        buf.write("fingerprint,detector,eta,n_runs,pfa\n")
        for (kind, fp), e in self.items():
            buf.write(f"{fp},{kind.key},{e.eta!r},{e.n_runs},{e.pfa!r}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != f"# {THRESHOLD_FORMAT}":
            raise InvalidInputError("not a threshold table (missing format line)")
        if lines[1].strip() != "fingerprint,detector,eta,n_runs,pfa":
            raise InvalidInputError("unexpected threshold table header")
        table = cls()
        for ln in lines[2:]:
            fp, det, eta, n, pfa = ln.split(",")
            table.set(DetectorKind.parse(det), fp, float(eta), int(n), float(pfa),
                      enforce_size=False)
        return table

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())
