import numpy as np
import pytest

from clutterem.detect import (DetectorKind, Scheme, ThresholdTable, all_detectors,
                              calibrate_threshold, decide, latent_lrt_statistic,
                              plugin_lrt_statistic, scenario_fingerprint)
from clutterem.em import EmConfig, Hypothesis, ModelParams, classify, initialize, run_em
from clutterem.errors import (InsufficientCalibrationError, InternalConsistencyError,
                              InvalidInputError)
from clutterem.scenario import ClutterRegion, ScenarioConfig, steering_vector, synthesize


def h0_params(M, priors):
    return ModelParams(Hypothesis.H0, np.asarray(priors, float), np.asarray(M, complex),
                       np.ones(np.shape(M)[-1]))


class TestLatentLrt:
    def test_identical_mixtures(self, rng):
        Z = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
        M = np.stack([np.eye(2), 3 * np.eye(2)])
        p0 = h0_params(M, [0.4, 0.6])
        p1 = ModelParams(Hypothesis.H11, np.array([0.4, 0.6, 0.0, 0.0]), M, np.ones(2),
                         alpha=np.ones(6, complex))
        assert latent_lrt_statistic(Z, p1, p0) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_mixture_ratio(self):
        z = np.array([[1.5 + 0.5j]])
        p0 = h0_params([[[1.0]]], [1.0])
        p1 = ModelParams(Hypothesis.H12, np.array([0.7, 0.3]), np.ones((1, 1, 1)), np.ones(1),
                         sigma2=np.array([2.0]))
        f = lambda var: np.exp(-abs(z[0, 0]) ** 2 / var) / (np.pi * var)
        expected = np.log(0.7 * f(1.0) + 0.3 * f(3.0)) - np.log(f(1.0))
        assert latent_lrt_statistic(z, p1, p0) == pytest.approx(expected)

    def test_relabeling_invariance(self, rng):
        Z = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
        M = np.stack([np.eye(2), 4 * np.eye(2)])
        p0 = h0_params(M, [0.3, 0.7])
        p0_swapped = h0_params(M[::-1], [0.7, 0.3])
        p1 = ModelParams(Hypothesis.H11, np.array([0.3, 0.6, 0.05, 0.05]), M, np.ones(2),
                         alpha=np.full(5, 0.5 + 0j))
        assert latent_lrt_statistic(Z, p1, p0) == pytest.approx(
            latent_lrt_statistic(Z, p1, p0_swapped))

    def test_requires_h0(self, rng):
        p = ModelParams(Hypothesis.H11, np.full(2, 0.5), np.eye(1)[None], np.ones(1),
                        alpha=np.zeros(1, complex))
        with pytest.raises(InvalidInputError):
            latent_lrt_statistic(np.ones((1, 1)), p, p)


class TestPluginLrt:
    def test_identical_partitions(self, rng):
        Z = rng.standard_normal((4, 2)) + 0j
        p0 = h0_params(np.eye(2)[None], [1.0])
        p1 = ModelParams(Hypothesis.H11, np.array([1.0, 0.0]), np.eye(2)[None], np.ones(2),
                         alpha=np.zeros(4, complex))
        labels = np.ones(4, int)
        assert plugin_lrt_statistic(Z, labels, p1, labels, p0) == pytest.approx(0.0)

    def test_single_target_bin(self):
        z = 1.3 - 0.4j
        p0 = h0_params([[[1.0]]], [1.0])
        p1 = ModelParams(Hypothesis.H11, np.array([0.5, 0.5]), np.ones((1, 1, 1)), np.ones(1),
                         alpha=np.array([z]))
        stat = plugin_lrt_statistic(np.array([[z]]), np.array([2]), p1, np.array([1]), p0)
        assert stat == pytest.approx(abs(z) ** 2)

    def test_label_change_is_one_bin_ratio(self, rng):
        Z = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
        p0 = h0_params(np.eye(2)[None], [1.0])
        p1 = ModelParams(Hypothesis.H11, np.array([0.8, 0.2]), np.eye(2)[None], np.ones(2),
                         alpha=Z @ np.ones(2) / 2)
        with_t = np.array([1, 2, 1, 1, 1])
        without = np.ones(5, int)
        d = (plugin_lrt_statistic(Z, with_t, p1, without, p0)
             - plugin_lrt_statistic(Z, without, p1, without, p0))
        r = Z[1] - p1.alpha[1] * np.ones(2)
        assert d == pytest.approx(np.vdot(Z[1], Z[1]).real - np.vdot(r, r).real)

    def test_bad_label(self):
        p0 = h0_params(np.eye(1)[None], [1.0])
        with pytest.raises(InternalConsistencyError):
            plugin_lrt_statistic(np.ones((1, 1)), np.array([3]), p0, np.array([1]), p0)

    def test_missing_target_parameter(self):
        p0 = h0_params(np.eye(1)[None], [1.0])
        p1 = ModelParams(Hypothesis.H12, np.full(2, 0.5), np.eye(1)[None], np.ones(1))
        with pytest.raises(InternalConsistencyError):
            plugin_lrt_statistic(np.ones((1, 1)), np.array([2]), p1, np.array([1]), p0)

    def test_monotone_in_target_energy(self):
        cfg = ScenarioConfig(8, [ClutterRegion(32, 20), ClutterRegion(32, 30)])
        cfg = cfg.with_targets([15], 20.0, "deterministic")
        v = steering_vector(8)
        Z, _ = synthesize(cfg, seed=8)
        p0, Q0, _ = run_em(Z, "H0", EmConfig(), initialize(Z, "H0", 2, v))
        p1, Q1, _ = run_em(Z, "H11", EmConfig(), initialize(Z, "H11", 2, v))
        lab1, lab0 = classify(Q1, 2).labels, classify(Q0, 2).labels
        k = 14
        assert lab1[k] > 2
        prev = -np.inf
        for boost in np.linspace(0.0, 20.0, 9):
            Zb = Z.copy()
            Zb[k] = Z[k] + boost * p1.alpha[k] / abs(p1.alpha[k]) * v
            p = p1.copy()
            Mi = np.linalg.inv(p.covariances[(lab1[k] - 1) % 2])
            p.alpha[k] = (v.conj() @ Mi @ Zb[k]) / (v.conj() @ Mi @ v)
            stat = plugin_lrt_statistic(Zb, lab1, p, lab0, p0)
            assert stat >= prev - 1e-9
            prev = stat


class TestCalibration:
    def test_spec_example(self):
        stats = np.arange(1, 101)
        eta = calibrate_threshold(stats, 0.05, enforce_size=False)
        assert eta == 96
        assert np.count_nonzero(stats > eta) == 4

    def test_all_equal(self):
        eta = calibrate_threshold(np.full(1000, 2.5), 0.1)
        assert eta == 2.5 and not np.any(decide(np.full(1000, 2.5), eta))

    def test_hundredth_largest(self, rng):
        stats = rng.standard_normal(10_000)
        assert calibrate_threshold(stats, 1e-2) == np.sort(stats)[-100]

    def test_too_few_runs(self):
        with pytest.raises(InsufficientCalibrationError):
            calibrate_threshold(np.arange(100), 0.05)

    def test_exceedance_never_above_target(self, rng):
        for n in (1000, 1234, 5000):
            stats = rng.standard_normal(n)
            eta = calibrate_threshold(stats, 0.1)
            assert np.count_nonzero(stats > eta) <= n * 0.1


def test_decide():
    assert decide(5, 4) is True
    assert decide(4, 4) is False
    assert decide(-1, 0) is False
    assert list(decide(np.array([1.0, 3.0]), 2.0)) == [False, True]


class TestDetectorKind:
    def test_parse_roundtrip(self):
        k = DetectorKind(Scheme.LATENT, "H12")
        assert DetectorKind.parse(k.key) == k

    def test_h0_rejected(self):
        with pytest.raises(InvalidInputError):
            DetectorKind(Scheme.PLUGIN, "H0")

    def test_all(self):
        assert len(all_detectors()) == 6


class TestThresholdTable:
    def test_roundtrip(self, tmp_path):
        t = ThresholdTable()
        t.set(DetectorKind("plugin-lrt", "H11"), "abc", 12.25, 10_000, 0.01)
        t.set(DetectorKind("latent-lrt", "H13"), "abc", -3.5e-7, 20_000, 0.01)
        path = tmp_path / "thr.csv"
        t.save(path)
        back = ThresholdTable.load(path)
        assert back.dumps() == t.dumps()
        assert back.get(DetectorKind("latent-lrt", "H13"), "abc").eta == -3.5e-7

    def test_invariants(self):
        t = ThresholdTable()
        with pytest.raises(InvalidInputError):
            t.set(DetectorKind("plugin-lrt", "H11"), "x", np.inf, 10_000, 0.01)
        with pytest.raises(InsufficientCalibrationError):
            t.set(DetectorKind("plugin-lrt", "H11"), "x", 1.0, 99, 0.01)

    def test_bad_format(self):
        with pytest.raises(InvalidInputError):
            ThresholdTable.loads("fingerprint,detector\n")


def test_fingerprint_ignores_targets():
    cfg = ScenarioConfig(8, [ClutterRegion(32, 20), ClutterRegion(32, 30)])
    a = scenario_fingerprint(cfg)
    assert a == scenario_fingerprint(cfg.with_targets([3], 10.0, "swarm"))
    assert a != scenario_fingerprint(ScenarioConfig(8, [ClutterRegion(32, 20), ClutterRegion(32, 31)]))
    assert a != scenario_fingerprint(cfg, EmConfig())
