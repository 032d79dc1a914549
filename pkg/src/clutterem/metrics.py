"""Classification, localization and detection measures."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import InvalidInputError, UndefinedDeltaError
from .scenario import GroundTruth

#: Two-sided 95% normal quantile.
Z95 = float(norm.ppf(0.975))


@dataclass
class TrialOutcome:
    """Everything one Monte Carlo trial contributes to the aggregates.

    ``regions`` are the estimated 1-based clutter-region labels per bin and
    ``target_bins`` the 1-based bins classified as target.
    """

    regions: np.ndarray
    target_bins: set
    truth: GroundTruth
    decisions: dict = field(default_factory=dict)
    trace: Optional[object] = None

    def __post_init__(self):
        self.regions = np.asarray(self.regions)
        if self.regions.shape != np.shape(self.truth.region_labels):
            raise InvalidInputError("estimated and true label vectors differ in length")

    @property
    def n_bins(self):
        return self.regions.size

    @property
    def region_errors(self):
        return int(np.count_nonzero(self.regions != self.truth.region_labels))

    @property
    def hausdorff(self):
        return hausdorff_distance(self.target_bins, self.truth.target_bins, self.n_bins)


def hausdorff_distance(est_bins, true_bins, n_bins):
    """Hausdorff distance between two sets of bin indices.

    An empty set against a non-empty one scores ``n_bins``; two empty sets
    score 0.
    """
    a = np.fromiter(sorted(est_bins), dtype=float)
    b = np.fromiter(sorted(true_bins), dtype=float)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float(n_bins)
    gap = np.abs(a[:, None] - b[None, :])
    return float(max(gap.min(axis=1).max(), gap.min(axis=0).max()))


def rms(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidInputError("need at least one value")
    return float(np.sqrt(np.mean(values ** 2)))


def rmsce(trials):
    """RMS over trials of the number of bins assigned to the wrong region."""
    return rms([t.region_errors for t in trials])


def rms_hausdorff(trials):
    return rms([t.hausdorff for t in trials])


@dataclass(frozen=True)
class Proportion:
    value: float
    ci_low: float
    ci_high: float
    n: int


def wilson_interval(successes, n, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise InvalidInputError("need at least one trial")
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # rounding can push a bound past the point estimate at p = 0 or 1
    return float(max(0.0, min(centre - half, p))), float(min(1.0, max(centre + half, p)))


def pd_estimate(decisions):
    """Fraction of H1 declarations with its 95% Wilson interval."""
    d = np.asarray(decisions, dtype=bool).ravel()
    lo, hi = wilson_interval(int(d.sum()), d.size)
    return Proportion(float(d.mean()), lo, hi, int(d.size))


def rms_interval(values, z=Z95):
    """Delta-method 95% interval for an RMS value, from the spread of squares."""
    sq = np.asarray(values, dtype=float) ** 2
    m = sq.mean()
    if sq.size < 2 or m == 0:
        return float(np.sqrt(m)), float(np.sqrt(m))
    se = sq.std(ddof=1) / np.sqrt(sq.size)
    return float(np.sqrt(max(m - z * se, 0.0))), float(np.sqrt(m + z * se))


def delta_loglik(trace, h):
    """Relative change ``|(L(h) - L(h-1)) / L(h)|`` of a trace at iteration ``h``.

    ``trace`` is an ``EmTrace`` or a plain sequence of log-likelihood values.
    """
    values = np.asarray(getattr(trace, "objective", trace), dtype=float)
    if h < 1 or h >= values.shape[-1]:
        raise InvalidInputError(f"h={h} outside 1..{values.shape[-1] - 1}")
    cur, prev = values[..., h], values[..., h - 1]
    if np.any(cur == 0):
        raise UndefinedDeltaError("log-likelihood is exactly zero")
    out = np.abs((cur - prev) / cur)
    return float(out) if out.ndim == 0 else out
