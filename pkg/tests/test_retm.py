"""Tests for src.dsp.retm."""

import numpy as np
import pytest

from src.core.exceptions import ContractViolationError, NumericalError
from src.dsp import covariance, retm
from src.dsp.covariance import CovariancePair
from src.dsp.linalg import frobenius_relative
from tests.conftest import complex_gaussian
from tests.test_covariance import mix_frames

# oracle covariances are exactly rank deficient; rounding-level singular values must be cut
TOL = 1e-10


def oracle_parts(h_a, h_b, powers):
    """One oracle covariance pair per source."""
    return [covariance.oracle_pair(h_a[:, :, [l]], h_b[:, :, [l]], [p]) for l, p in enumerate(powers)]


def residual(r: retm.Retm, h_a, h_b) -> float:
    return float(retm.relation_residual(r, h_a, h_b).max())


# ---------------------------------------------------------------------------
# Oracle reproduction of the ReTM definition
# ---------------------------------------------------------------------------


class TestOracleReproduction:
    def test_direct(self, make_system):
        h_a, h_b = make_system(bins=6, q_a=6, q_b=8, sources=4)
        r = retm.estimate_direct(covariance.oracle_pair(h_a, h_b, np.ones(4)), TOL)
        assert residual(r, h_a, h_b) < 1e-8
        oracle = retm.oracle_retm(h_a, h_b)
        assert frobenius_relative(r.matrices - oracle.matrices, oracle.matrices).max() < 1e-8

    def test_scalar_reduces_to_ratio(self, rng):
        h_a = complex_gaussian(rng, (5, 1, 1))
        h_b = complex_gaussian(rng, (5, 1, 1))
        r = retm.estimate_direct(covariance.oracle_pair(h_a, h_b, [2.0]))
        np.testing.assert_allclose(r.matrices[:, 0, 0], h_a[:, 0, 0] / h_b[:, 0, 0], rtol=1e-10)

    def test_subtraction(self, make_system):
        h_a, h_b = make_system(bins=4, q_a=6, q_b=8, sources=5)
        powers = np.array([1.0, 0.5, 2.0, 1.5, 0.7])
        full = covariance.oracle_pair(h_a, h_b, powers)
        noise = covariance.oracle_pair(h_a[:, :, 3:], h_b[:, :, 3:], powers[3:])
        r = retm.estimate_by_subtraction(full, noise, TOL)
        assert residual(r, h_a[:, :, :3], h_b[:, :, :3]) < 1e-8

    def test_subtraction_of_zero_equals_direct(self, make_system):
        h_a, h_b = make_system()
        full = covariance.oracle_pair(h_a, h_b, np.ones(3))
        zero = CovariancePair.zeros(*full.shape)
        np.testing.assert_array_equal(
            retm.estimate_by_subtraction(full, zero).matrices, retm.estimate_direct(full).matrices
        )

    def test_noise_retm(self, make_system):
        h_a, h_b = make_system(sources=2)
        r = retm.estimate_noise_retm(covariance.oracle_pair(h_a, h_b, [1.0, 3.0]), TOL)
        assert residual(r, h_a, h_b) < 1e-8
        assert r.provenance["method"] == "noise"

    def test_single_noise_source_rank_deficient(self, make_system):
        h_a, h_b = make_system(sources=1)
        r = retm.estimate_noise_retm(covariance.oracle_pair(h_a, h_b, [1.0]), TOL)
        assert r.failed_count == 0
        assert residual(r, h_a, h_b) < 1e-8

    def test_subset_of_two(self, make_system):
        h_a, h_b = make_system(sources=3)
        parts = oracle_parts(h_a, h_b, [1.0, 1.0, 1.0])
        r = retm.estimate_subset(parts[:2], TOL)
        assert residual(r, h_a[:, :, :2], h_b[:, :, :2]) < 1e-8

    def test_subset_single_part_equals_direct(self, make_system):
        h_a, h_b = make_system()
        pair = covariance.oracle_pair(h_a, h_b, np.ones(3))
        np.testing.assert_array_equal(retm.estimate_subset([pair]).matrices, retm.estimate_direct(pair).matrices)

    def test_subset_all_sources_equals_direct(self, make_system):
        h_a, h_b = make_system(sources=3)
        parts = oracle_parts(h_a, h_b, [1.0, 2.0, 0.5])
        total = covariance.total(parts)
        np.testing.assert_allclose(
            retm.estimate_subset(parts, TOL).matrices, retm.estimate_direct(total, TOL).matrices, atol=1e-12
        )

    def test_subset_empty_rejected(self):
        with pytest.raises(ContractViolationError, match="empty"):
            retm.estimate_subset([])


# ---------------------------------------------------------------------------
# Training estimator for one speaker's undesired sources
# ---------------------------------------------------------------------------


class TestUndesiredForSpeaker:
    def setup_system(self, make_system):
        # 3 speakers (columns 0..2) and 2 noises (columns 3..4)
        h_a, h_b = make_system(bins=4, q_a=6, q_b=8, sources=5)
        powers = np.array([1.0, 0.8, 1.2, 0.5, 2.0])
        noise_only = covariance.oracle_pair(h_a[:, :, 3:], h_b[:, :, 3:], powers[3:])
        noise_plus = [
            covariance.oracle_pair(h_a[:, :, [k, 3, 4]], h_b[:, :, [k, 3, 4]], powers[[k, 3, 4]])
            for k in range(3)
        ]
        return h_a, h_b, noise_only, noise_plus

    @pytest.mark.parametrize("target", [0, 1, 2])
    def test_oracle_undesired(self, make_system, target):
        h_a, h_b, noise_only, noise_plus = self.setup_system(make_system)
        r = retm.estimate_undesired_for_speaker(noise_only, noise_plus, target, TOL)
        undesired = [l for l in range(5) if l != target]
        assert residual(r, h_a[:, :, undesired], h_b[:, :, undesired]) < 1e-8
        assert r.provenance["target"] == target

    def test_single_speaker_reduces_to_noise_retm(self, make_system):
        _, _, noise_only, noise_plus = self.setup_system(make_system)
        r = retm.estimate_undesired_for_speaker(noise_only, noise_plus[:1], 0)
        np.testing.assert_array_equal(r.matrices, retm.estimate_noise_retm(noise_only).matrices)

    @pytest.mark.parametrize("target", [-1, 3])
    def test_target_out_of_range(self, make_system, target):
        _, _, noise_only, noise_plus = self.setup_system(make_system)
        with pytest.raises(ContractViolationError, match="out of range"):
            retm.estimate_undesired_for_speaker(noise_only, noise_plus, target)


# ---------------------------------------------------------------------------
# Non-additivity
# ---------------------------------------------------------------------------


class TestNonadditivity:
    def test_random_instances_not_additive(self):
        bounded_away = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            h_a = complex_gaussian(rng, (1, 4, 3))
            h_b = complex_gaussian(rng, (1, 4, 3))
            r_s = retm.oracle_retm(h_a[:, :, :2], h_b[:, :, :2])
            r_n = retm.oracle_retm(h_a[:, :, 2:], h_b[:, :, 2:])
            r_total = retm.oracle_retm(h_a, h_b)
            if retm.check_nonadditivity(r_s, r_n, r_total)[0] > 0.1:
                bounded_away += 1
        assert bounded_away >= 90

    def test_zero_noise_retm(self, make_system):
        h_a, h_b = make_system()
        r_total = retm.oracle_retm(h_a, h_b)
        zero = retm.Retm.zeros(*r_total.matrices.shape)
        np.testing.assert_allclose(retm.check_nonadditivity(r_total, zero, r_total), 0.0)

    def test_engineered_coincidence(self, rng):
        # one speech and one noise source with identical spatial signatures
        h_a = complex_gaussian(rng, (2, 1, 1))
        h_b = complex_gaussian(rng, (2, 1, 1))
        r_s = retm.oracle_retm(h_a, h_b)
        r_n = retm.Retm.zeros(2, 1, 1)
        r_total = retm.oracle_retm(np.concatenate([h_a, h_a], axis=2), np.concatenate([h_b, h_b], axis=2))
        assert retm.check_nonadditivity(r_s, r_n, r_total).max() < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolationError, match="shapes differ"):
            retm.check_nonadditivity(retm.Retm.zeros(2, 2, 3), retm.Retm.zeros(2, 2, 3), retm.Retm.zeros(2, 3, 3))


# ---------------------------------------------------------------------------
# Estimated covariances
# ---------------------------------------------------------------------------


class TestEstimated:
    def test_direct_from_frames(self, rng, make_system):
        h_a, h_b = make_system(bins=9, q_a=8, q_b=17, sources=3)
        frames_a, frames_b = mix_frames(rng, h_a, h_b, 5000)
        r = retm.estimate_direct(covariance.estimate(frames_a, frames_b), TOL)
        oracle = retm.oracle_retm(h_a, h_b)
        assert np.median(frobenius_relative(r.matrices - oracle.matrices, oracle.matrices)) < 0.05

    def test_signal_independence(self, make_system):
        h_a, h_b = make_system(bins=5, q_a=6, q_b=8, sources=3)
        first = retm.estimate_direct(covariance.estimate(*mix_frames(np.random.default_rng(1), h_a, h_b, 10000)), TOL)
        second = retm.estimate_direct(covariance.estimate(*mix_frames(np.random.default_rng(2), h_a, h_b, 10000)), TOL)
        assert np.median(frobenius_relative(first.matrices - second.matrices, first.matrices)) < 0.05

    def test_relation_holds_on_held_out_frames(self, rng, make_system):
        h_a, h_b = make_system(bins=5, q_a=6, q_b=8, sources=3)
        train_a, train_b = mix_frames(rng, h_a, h_b, 5000)
        test_a, test_b = mix_frames(rng, h_a, h_b, 1000)
        r = retm.estimate_direct(covariance.estimate(train_a, train_b), TOL)
        predicted = np.einsum("fab,bft->aft", r.matrices, test_b.data)
        err = np.linalg.norm(test_a.data - predicted, axis=(0, 2)) / np.linalg.norm(test_a.data, axis=(0, 2))
        assert np.median(err) < 0.15

    def test_noisy_subtraction(self, rng, make_system):
        # Q_A equal to the retained source count keeps P_BA well conditioned
        h_a, h_b = make_system(bins=5, q_a=2, q_b=8, sources=3)
        full = covariance.estimate(*mix_frames(rng, h_a, h_b, 40000))
        noise = covariance.estimate(*mix_frames(rng, h_a[:, :, 2:], h_b[:, :, 2:], 40000))
        r = retm.estimate_by_subtraction(full, noise)
        oracle = retm.oracle_retm(h_a[:, :, :2], h_b[:, :, :2])
        assert np.median(frobenius_relative(r.matrices - oracle.matrices, oracle.matrices)) < 0.10


# ---------------------------------------------------------------------------
# Retm container and failure handling
# ---------------------------------------------------------------------------


class TestRetm:
    def test_failed_mask_shape_checked(self):
        with pytest.raises(ContractViolationError, match="failed_bins"):
            retm.Retm(np.zeros((3, 2, 2)), failed_bins=np.zeros(4, dtype=bool))

    def test_usable_zeroes_failed_bins(self):
        r = retm.Retm(np.ones((3, 2, 2)), failed_bins=np.array([False, True, False]))
        usable = r.usable()
        assert not np.any(usable[1])
        np.testing.assert_array_equal(usable[0], np.ones((2, 2)))
        assert r.failed_count == 1

    def test_isolated_svd_failures_are_flagged(self, monkeypatch, make_system):
        h_a, h_b = make_system(bins=4)
        pair = covariance.oracle_pair(h_a, h_b, np.ones(3))
        real_pinv = retm.pseudoinverse

        def flaky(m, tol=None, context=""):
            if np.asarray(m).ndim == 3 or context == "bin 2":
                raise NumericalError(f"SVD did not converge ({context})")
            return real_pinv(m, tol, context)

        monkeypatch.setattr(retm, "pseudoinverse", flaky)
        r = retm.estimate_direct(pair)
        np.testing.assert_array_equal(r.failed_bins, [False, False, True, False])
        assert not np.any(r.matrices[2])

    def test_majority_failure_raises(self, monkeypatch, make_system):
        h_a, h_b = make_system(bins=4)
        pair = covariance.oracle_pair(h_a, h_b, np.ones(3))

        def broken(m, tol=None, context=""):
            raise NumericalError("SVD did not converge")

        monkeypatch.setattr(retm, "pseudoinverse", broken)
        with pytest.raises(NumericalError, match="4 of 4 bins"):
            retm.estimate_direct(pair)
