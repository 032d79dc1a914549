import numpy as np
import pytest

from clutterem.errors import InvalidInputError
from clutterem.scenario import (ClutterRegion, ScenarioConfig, Target, TargetModel,
                                clutter_covariance, steering_vector, synthesize,
                                target_amplitude, target_power)


def two_region(targets=()):
    return ScenarioConfig(8, [ClutterRegion(32, 20), ClutterRegion(32, 30)], targets)


class TestSteering:
    def test_zero_angle(self):
        assert np.allclose(steering_vector(4, 0.0), np.ones(4))

    def test_endfire(self):
        assert np.allclose(steering_vector(2, np.pi / 2), [1, -1])

    @pytest.mark.parametrize("n,aoa", [(1, 0.3), (8, -0.7), (5, 1.2)])
    def test_norm(self, n, aoa):
        assert np.linalg.norm(steering_vector(n, aoa)) ** 2 == pytest.approx(n)


class TestCovariance:
    def test_two_channel(self):
        M, S = clutter_covariance(2, 0.9, 20.0, 1.0)
        assert np.allclose(M, 100 * np.array([[1, 0.9], [0.9, 1]]))
        assert np.allclose(S - M, np.eye(2))

    def test_white(self):
        M, _ = clutter_covariance(3, 0.0, 0.0)
        assert np.allclose(M, np.eye(3))

    def test_rho_out_of_range(self):
        with pytest.raises(InvalidInputError):
            clutter_covariance(3, 1.0, 10.0)

    def test_noise_floor(self):
        for rho in (0.0, 0.5, 0.9, 0.99):
            _, S = clutter_covariance(8, rho, 30.0)
            assert np.linalg.eigvalsh(S).min() >= 1.0 * (1 - rho) * 0.5


class TestTargetLevels:
    def test_amplitude_white(self):
        v = steering_vector(8)
        a = target_amplitude(0.0, np.eye(8), v)
        assert abs(a) ** 2 == pytest.approx(1 / 8)

    def test_minus_infinity(self):
        assert target_amplitude(-np.inf, np.eye(2), np.ones(2)) == 0

    def test_three_db_doubles(self):
        _, S = clutter_covariance(8, 0.9, 20.0)
        v = steering_vector(8)
        r = abs(target_amplitude(13.0, S, v)) ** 2 / abs(target_amplitude(10.0, S, v)) ** 2
        assert r == pytest.approx(10 ** 0.3, rel=1e-12)
        assert r == pytest.approx(2.0, abs=5e-3)

    def test_phase_is_random(self):
        rng = np.random.default_rng(0)
        phases = {np.angle(target_amplitude(10, np.eye(2), np.ones(2), rng)) for _ in range(5)}
        assert len(phases) == 5

    def test_power(self):
        assert target_power(0.0, 100.0, 1.0) == pytest.approx(101.0)
        assert target_power(10.0, 0.0, 1.0) == pytest.approx(10.0)
        assert target_power(11.0, 5.0) > target_power(10.0, 5.0)


class TestConfig:
    def test_region_must_exceed_channels(self):
        with pytest.raises(InvalidInputError):
            ScenarioConfig(8, [ClutterRegion(8, 20)])

    def test_target_out_of_range(self):
        with pytest.raises(InvalidInputError):
            two_region([Target(65, 10.0)])

    def test_duplicate_target(self):
        with pytest.raises(InvalidInputError):
            two_region([Target(3, 10.0), Target(3, 12.0)])

    def test_labels_partition(self):
        labels = two_region().region_labels()
        assert labels.shape == (64,)
        assert set(labels[:32]) == {1} and set(labels[32:]) == {2}


class TestSynthesize:
    def test_flags_two_region_bins(self):
        cfg = two_region().with_targets([15, 38], 20.0, "deterministic")
        Z, truth = synthesize(cfg, seed=3)
        assert Z.shape == (64, 8)
        assert truth.target_bins == {15, 38}
        assert set(truth.injected) == {15, 38}

    def test_reproducible(self):
        cfg = two_region().with_targets([15, 38], 20.0, "swarm")
        Z1, _ = synthesize(cfg, seed=11)
        Z2, _ = synthesize(cfg, seed=11)
        assert np.array_equal(Z1, Z2)
        assert not np.array_equal(Z1, synthesize(cfg, seed=12)[0])

    def test_sample_covariance_converges(self):
        cfg = ScenarioConfig(4, [ClutterRegion(100_000, 10.0, 0.8)])
        Z, _ = synthesize(cfg, seed=5)
        S = Z.T @ Z.conj() / Z.shape[0]
        _, sigma = clutter_covariance(4, 0.8, 10.0)
        assert np.linalg.norm(S - sigma) / np.linalg.norm(sigma) < 0.02

    def test_circularity(self):
        cfg = ScenarioConfig(3, [ClutterRegion(50_000, 0.0, 0.5)])
        Z, _ = synthesize(cfg, seed=9)
        pseudo = Z.T @ Z / Z.shape[0]
        _, sigma = clutter_covariance(3, 0.5, 0.0)
        # standard error of each entry is about sigma_ii / sqrt(n)
        assert np.all(np.abs(pseudo) < 3 * 2.0 / np.sqrt(Z.shape[0]) * np.max(np.diag(sigma).real))

    def test_deterministic_target_is_mean_shift(self):
        cfg = two_region()
        hot = cfg.with_targets([15], 30.0, TargetModel.DETERMINISTIC)
        Z0, _ = synthesize(cfg, seed=2)
        Z1, truth = synthesize(hot, seed=2)
        diff = Z1 - Z0
        assert np.allclose(np.delete(diff, 14, axis=0), 0)
        assert np.allclose(diff[14], truth.injected[15] * steering_vector(8))

    def test_fluctuating_power_scale(self):
        cfg = ScenarioConfig(2, [ClutterRegion(20, 10.0)], aoa_rad=0.0)
        hot = cfg.with_targets([1], 20.0, TargetModel.FLUCTUATING)
        energy = [np.abs(synthesize(hot, seed=s)[0][0] @ np.ones(2).conj()) ** 2
                  for s in range(3000)]
        M, S = clutter_covariance(2, 0.9, 10.0)
        v = np.ones(2)
        power = target_power(20.0, 10.0)
        expected = power * 4 + np.real(v @ S @ v)
        assert np.mean(energy) == pytest.approx(expected, rel=0.08)
