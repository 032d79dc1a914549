"""Monte Carlo execution of an experiment plan.

Trials are grouped into fixed-size chunks and each chunk runs the EM fits as
one batch. Every trial draws from its own generator, seeded from the master
seed and the trial's coordinates, so chunking and worker count never change
the numbers. Chunks come back in submission order and aggregates are formed
from trial-indexed arrays, which keeps result files byte-identical across
runs and thread counts.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..detect import (DetectorKind, Scheme, ThresholdTable, calibrate_threshold,
                      decide, latent_lrt_statistic, plugin_lrt_statistic,
                      scenario_fingerprint)
from ..em import Hypothesis, classify, initialize, run_em
from ..em.procedure import relative_deltas
from ..errors import InsufficientCalibrationError
from ..metrics import Z95, hausdorff_distance, pd_estimate, rms, rms_interval
from ..scenario import steering_vector, synthesize
from .io import ResultTable
from .plan import ExperimentPlan

log = logging.getLogger(__name__)

STREAM_CALIBRATION = 0
STREAM_EVALUATION = 1
#: Relative slack for counting a decrease of the EM objective.
MONOTONE_SLACK = 1e-8


def trial_rng(master_seed, stream, *coords):
    """Generator for one trial, derived from ``(master_seed, stream, *coords)``.

    The derivation is numpy's ``SeedSequence`` hash mixing, so distinct
    coordinates give statistically independent streams.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream),) + tuple(map(int, coords)))
    return np.random.Generator(np.random.PCG64(seq))


def _fit(Z, hypothesis, plan, v):
    n_regions = plan.scenario.n_regions
    params, Q, trace = run_em(Z, hypothesis, plan.em, initialize(Z, hypothesis, n_regions, v))
    return params, classify(Q, n_regions), trace


def _with_fallback(fn, Z):
    """Run ``fn`` on the whole batch; on failure, trial by trial.

    Returns the per-trial output dicts (``None`` for failed trials).
    """
    try:
        out = fn(Z)
        return [{k: v[i] for k, v in out.items()} for i in range(Z.shape[0])]
    except Exception as exc:  # noqa: BLE001 - any fit failure excludes the trial
        log.debug("batch failed (%s); retrying trial by trial", exc)
    rows = []
    for i in range(Z.shape[0]):
        try:
            out = fn(Z[i:i + 1])
            rows.append({k: v[0] for k, v in out.items()})
        except Exception as exc:  # noqa: BLE001
            log.info("trial excluded: %s", exc)
            rows.append(None)
    return rows


def _detector_stats(Z, fit1, fit0, schemes):
    p1, c1, _ = fit1
    p0, c0, _ = fit0
    out = {}
    if Scheme.PLUGIN in schemes:
        out[Scheme.PLUGIN] = plugin_lrt_statistic(Z, c1.labels, p1, c0.labels, p0)
    if Scheme.LATENT in schemes:
        out[Scheme.LATENT] = latent_lrt_statistic(Z, p1, p0)
    for k, s in out.items():
        if not np.all(np.isfinite(s)):
            raise FloatingPointError(f"non-finite {k.value} statistic")
    return out


@dataclass(frozen=True)
class _Task:
    phase: str
    plan: ExperimentPlan
    start: int
    stop: int
    sinr_index: int = -1
    hypothesis: Hypothesis = None


def _calibration_chunk(task):
    plan = task.plan
    v = steering_vector(plan.scenario.n_channels, plan.scenario.aoa_rad)
    scene = plan.null_scene()
    Z = np.stack([synthesize(scene, rng=trial_rng(plan.seed, STREAM_CALIBRATION, t))[0]
                  for t in range(task.start, task.stop)])

    def fn(Zb):
        fit0 = _fit(Zb, Hypothesis.H0, plan, v)
        out = {}
        for hyp in plan.hypotheses:
            stats = _detector_stats(Zb, _fit(Zb, hyp, plan, v), fit0, plan.detectors)
            for scheme, s in stats.items():
                out[DetectorKind(scheme, hyp).key] = s
        return out

    return _with_fallback(fn, Z)


def _evaluation_chunk(task):
    plan, hyp = task.plan, task.hypothesis
    v = steering_vector(plan.scenario.n_channels, plan.scenario.aoa_rad)
    scene = plan.scene(hyp, plan.sinr_db[task.sinr_index])
    draws = [synthesize(scene, rng=trial_rng(plan.seed, STREAM_EVALUATION, task.sinr_index, t))
             for t in range(task.start, task.stop)]
    Z = np.stack([d[0] for d in draws])
    truth_regions = np.stack([d[1].region_labels for d in draws])
    truth_targets = draws[0][1].target_bins
    K = scene.n_bins

    def fn(Zb):
        fit1 = _fit(Zb, hyp, plan, v)
        fit0 = _fit(Zb, Hypothesis.H0, plan, v) if plan.detectors else None
        _, cls, trace = fit1
        n = Zb.shape[0]
        regions = cls.regions.reshape(n, K)
        flags = cls.target_flags.reshape(n, K)
        out = {
            "objective": trace.objective.reshape(n, -1),
            "loglik": trace.loglik.reshape(n, -1),
            "regions": regions,
            "flags": flags,
        }
        if fit0 is not None:
            for scheme, s in _detector_stats(Zb, fit1, fit0, plan.detectors).items():
                out[scheme.value] = np.reshape(s, n)
        return out

    rows = _with_fallback(fn, Z)
    for i, row in enumerate(rows):
        if row is None:
            continue
        est = set((np.flatnonzero(row.pop("flags")) + 1).tolist())
        row["region_errors"] = int(np.count_nonzero(row.pop("regions") != truth_regions[i]))
        row["hausdorff"] = hausdorff_distance(est, truth_targets, K)
        row["n_targets"] = len(est)
    return rows


def _run_tasks(worker, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks))


def _chunks(plan, n):
    return [(s, min(s + plan.chunk, n)) for s in range(0, n, plan.chunk)]


@dataclass
class CalibrationResult:
    thresholds: ThresholdTable
    statistics: dict = field(default_factory=dict)   # detector key -> stats array
    failed: int = 0


def calibrate(plan: ExperimentPlan, threads=1, table=None):
    """Fit every hypothesis on fresh null windows and set one threshold per detector."""
    if not plan.detectors:
        raise InsufficientCalibrationError("plan declares no detectors")
    table = ThresholdTable() if table is None else table
    n = plan.calibration_trials
    tasks = [_Task("calibration", plan, a, b) for a, b in _chunks(plan, n)]
    rows = [r for chunk in _run_tasks(_calibration_chunk, tasks, threads) for r in chunk]
    failed = sum(r is None for r in rows)
    if failed:
        log.warning("calibration: %d of %d null trials excluded", failed, n)
    fp = scenario_fingerprint(plan.scenario, plan.em)
    stats = {}
    for hyp in plan.hypotheses:
        for scheme in plan.detectors:
            kind = DetectorKind(scheme, hyp)
            s = np.array([r[kind.key] for r in rows if r is not None], dtype=float)
            eta = calibrate_threshold(s, plan.pfa)
            table.set(kind, fp, eta, s.size, plan.pfa)
            stats[kind.key] = s
    return CalibrationResult(table, stats, failed)


def _has_thresholds(table, plan):
    fp = scenario_fingerprint(plan.scenario, plan.em)
    return table is not None and all(
        (DetectorKind(s, h), fp) in table for h in plan.hypotheses for s in plan.detectors)


def _mean_ci(x):
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    if x.size < 2:
        return m, m, m
    half = Z95 * float(x.std(ddof=1)) / np.sqrt(x.size)
    return m, m - half, m + half


@dataclass
class ExperimentResult:
    table: ResultTable
    manifest: dict
    thresholds: ThresholdTable


def run_experiment(plan: ExperimentPlan, threads=1, thresholds: ThresholdTable = None):
    """Calibrate (unless thresholds are supplied) and evaluate every sweep point.

    Returns the long-format result table, a flat manifest and the thresholds
    actually used.
    """
    table = ResultTable(plan.name, plan.seed)
    manifest = {
        "name": plan.name,
        "version": __version__,
        "numpy": np.__version__,
        "seed": plan.seed,
        "plan_sha256": plan.digest(),
        "fingerprint": scenario_fingerprint(plan.scenario, plan.em),
        "evaluation_trials": plan.evaluation_trials,
    }
    fp = manifest["fingerprint"]
    if plan.detectors:
        if _has_thresholds(thresholds, plan):
            manifest["calibration"] = "supplied"
        else:
            cal = calibrate(plan, threads, thresholds)
            thresholds = cal.thresholds
            manifest["calibration"] = "computed"
            manifest["calibration_trials"] = plan.calibration_trials
            manifest["calibration_failed"] = cal.failed
        for hyp in plan.hypotheses:
            for scheme in plan.detectors:
                kind = DetectorKind(scheme, hyp)
                e = thresholds.get(kind, fp)
                table.append(hyp.value, scheme.value, None, "threshold", e.eta, n=e.n_runs)

    tasks = [_Task("evaluation", plan, a, b, si, hyp)
             for si in range(len(plan.sinr_db)) for hyp in plan.hypotheses
             for a, b in _chunks(plan, plan.evaluation_trials)]
    results = _run_tasks(_evaluation_chunk, tasks, threads)
    grouped = {}
    for task, rows in zip(tasks, results):
        grouped.setdefault((task.sinr_index, task.hypothesis), []).extend(rows)

    failed_total = 0
    for (si, hyp), rows in grouped.items():
        sinr = plan.sinr_db[si]
        ok = [r for r in rows if r is not None]
        failed = len(rows) - len(ok)
        failed_total += failed
        if failed:
            log.warning("%s at %.1f dB: %d of %d trials excluded", hyp.value, sinr, failed, len(rows))
        add = lambda metric, value, lo=None, hi=None, det=None, n=len(ok): table.append(
            hyp.value, det, sinr, metric, value, lo, hi, n)
        add("failed_trials", failed, n=len(rows))
        if not ok:
            continue
        for scheme in plan.detectors:
            eta = thresholds.get(DetectorKind(scheme, hyp), fp).eta
            p = pd_estimate(decide(np.array([r[scheme.value] for r in ok]), eta))
            add("pd", p.value, p.ci_low, p.ci_high, det=scheme.value)
        errors = [r["region_errors"] for r in ok]
        add("rmsce", rms(errors), *rms_interval(errors))
        haus = [r["hausdorff"] for r in ok]
        add("hausdorff_rms", rms(haus), *rms_interval(haus))
        add("mean_target_bins", *_mean_ci([r["n_targets"] for r in ok]))
        obj = np.stack([r["objective"] for r in ok])
        ll = np.stack([r["loglik"] for r in ok])
        for name, seq in (("objective_decreases", obj), ("loglik_decreases", ll)):
            drops = np.diff(seq, axis=-1) < -MONOTONE_SLACK * np.abs(seq[:, 1:])
            add(name, int(np.count_nonzero(drops.any(axis=-1))))
        deltas = relative_deltas(obj)
        for h in range(1, deltas.shape[-1] + 1):
            add(f"delta_loglik[{h}]", *_mean_ci(deltas[:, h - 1]))
    manifest["evaluation_failed"] = failed_total
    return ExperimentResult(table, manifest, thresholds)
