"""Tests for src.dsp.covariance."""

import numpy as np
import pytest

from src.core.exceptions import ContractViolationError
from src.dsp import covariance
from src.dsp.covariance import CovariancePair
from src.dsp.linalg import conj_transpose, frobenius_relative
from src.dsp.stft import SpectralFrames
from tests.conftest import complex_gaussian


def frames_from(data: np.ndarray) -> SpectralFrames:
    """Wrap (channels, bins, frames) data with a window matching the bin count."""
    window_len = 2 * (data.shape[1] - 1)
    return SpectralFrames(data, 16000, window_len, window_len // 2)


def mix_frames(rng, h_a, h_b, frames, powers=None):
    """Frames of independent complex Gaussian sources through h (bins, Q, L)."""
    bins, _, n_src = h_a.shape
    powers = np.ones(n_src) if powers is None else np.asarray(powers)
    s = complex_gaussian(rng, (bins, n_src, frames)) * np.sqrt(powers)[None, :, None]
    m_a = np.einsum("fql,flt->qft", h_a, s)
    m_b = np.einsum("fql,flt->qft", h_b, s)
    return frames_from(m_a), frames_from(m_b)


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


class TestEstimate:
    def test_single_frame_outer_product(self):
        data = np.zeros((2, 3, 1), dtype=complex)
        data[0, :, 0] = 1.0
        pair = covariance.estimate(frames_from(data), frames_from(data))
        np.testing.assert_allclose(pair.p_aa[1], np.array([[1, 0], [0, 0]]))
        assert pair.frame_count == 1

    def test_white_frames_identity(self, rng):
        data = complex_gaussian(rng, (3, 2, 50000))
        pair = covariance.estimate(frames_from(data), frames_from(data))
        for f in range(2):
            np.testing.assert_allclose(np.diag(pair.p_aa[f]).real, np.ones(3), atol=0.03)
            off = pair.p_aa[f][~np.eye(3, dtype=bool)]
            assert np.abs(off).max() < 0.02

    def test_hermitian_exact(self, rng):
        data = complex_gaussian(rng, (4, 3, 20))
        pair = covariance.estimate(frames_from(data), frames_from(data[:2]))
        np.testing.assert_array_equal(pair.p_aa, conj_transpose(pair.p_aa))
        assert pair.p_ba.shape == (3, 2, 4)

    def test_frame_range(self, rng):
        data = complex_gaussian(rng, (2, 2, 10))
        pair = covariance.estimate(frames_from(data), frames_from(data), (2, 6))
        expected = data[:, :, 2:6]
        np.testing.assert_allclose(pair.p_aa[0], expected[:, 0] @ expected[:, 0].conj().T / 4)
        assert pair.frame_count == 4

    def test_disjoint_ranges_agree(self, rng, make_system):
        h_a, h_b = make_system(bins=2, q_a=3, q_b=4, sources=2)
        frames_a, frames_b = mix_frames(rng, h_a, h_b, 20000)
        first = covariance.estimate(frames_a, frames_b, (0, 10000))
        second = covariance.estimate(frames_a, frames_b, (10000, 20000))
        assert frobenius_relative(first.p_aa - second.p_aa, first.p_aa).max() < 0.05

    def test_misaligned_rejected(self, rng):
        a = frames_from(complex_gaussian(rng, (2, 3, 10)))
        b = frames_from(complex_gaussian(rng, (2, 3, 9)))
        with pytest.raises(ContractViolationError, match="Misaligned"):
            covariance.estimate(a, b)

    def test_empty_range_rejected(self, rng):
        a = frames_from(complex_gaussian(rng, (2, 3, 10)))
        with pytest.raises(ContractViolationError, match="empty"):
            covariance.estimate(a, a, (5, 5))


# ---------------------------------------------------------------------------
# subtract / add
# ---------------------------------------------------------------------------


class TestAlgebra:
    def test_self_subtraction_is_zero(self, make_system):
        h_a, h_b = make_system()
        pair = covariance.oracle_pair(h_a, h_b, np.ones(3))
        diff = covariance.subtract(pair, pair)
        assert not np.any(diff.p_aa) and not np.any(diff.p_ba)
        assert diff.warnings == ()

    def test_oracle_subtraction_recovers_speech(self, make_system):
        h_a, h_b = make_system(sources=3)
        powers = np.array([1.0, 2.0, 0.5])
        full = covariance.oracle_pair(h_a, h_b, powers)
        noise = covariance.oracle_pair(h_a[:, :, 2:], h_b[:, :, 2:], powers[2:])
        speech = covariance.oracle_pair(h_a[:, :, :2], h_b[:, :, :2], powers[:2])
        diff = covariance.subtract(full, noise)
        np.testing.assert_allclose(diff.p_aa, speech.p_aa, atol=1e-12)
        np.testing.assert_allclose(diff.p_ba, speech.p_ba, atol=1e-12)

    def test_oracle_sum_of_sources(self, make_system):
        h_a, h_b = make_system(sources=3)
        parts = [covariance.oracle_pair(h_a[:, :, [l]], h_b[:, :, [l]], [1.0]) for l in range(3)]
        total = covariance.total(parts)
        full = covariance.oracle_pair(h_a, h_b, np.ones(3))
        np.testing.assert_allclose(total.p_aa, full.p_aa, atol=1e-12)
        np.testing.assert_allclose(total.p_ba, full.p_ba, atol=1e-12)

    def test_zero_plus_x(self, make_system):
        h_a, h_b = make_system()
        pair = covariance.oracle_pair(h_a, h_b, np.ones(3))
        summed = covariance.add(CovariancePair.zeros(*pair.shape), pair)
        np.testing.assert_array_equal(summed.p_aa, pair.p_aa)
        np.testing.assert_array_equal(summed.p_ba, pair.p_ba)

    def test_estimated_subtraction_close_to_oracle(self, rng, make_system):
        h_a, h_b = make_system(bins=2, q_a=3, q_b=4, sources=3)
        frames = 10000
        mix_a, mix_b = mix_frames(rng, h_a, h_b, frames)
        noise_a, noise_b = mix_frames(rng, h_a[:, :, 2:], h_b[:, :, 2:], frames)
        diff = covariance.subtract(covariance.estimate(mix_a, mix_b), covariance.estimate(noise_a, noise_b))
        oracle = covariance.oracle_pair(h_a[:, :, :2], h_b[:, :, :2], np.ones(2))
        assert frobenius_relative(diff.p_aa - oracle.p_aa, oracle.p_aa).max() < 0.10

    def test_estimated_additivity(self, rng, make_system):
        h_a, h_b = make_system(bins=2, q_a=3, q_b=4, sources=2)
        frames = 10000
        s = complex_gaussian(rng, (2, 2, frames))
        solo = []
        for l in range(2):
            a = np.einsum("fq,ft->qft", h_a[:, :, l], s[:, l])
            b = np.einsum("fq,ft->qft", h_b[:, :, l], s[:, l])
            solo.append(covariance.estimate(frames_from(a), frames_from(b)))
        mix_a = np.einsum("fql,flt->qft", h_a, s)
        mix_b = np.einsum("fql,flt->qft", h_b, s)
        joint = covariance.estimate(frames_from(mix_a), frames_from(mix_b))
        summed = covariance.add(*solo)
        assert frobenius_relative(summed.p_aa - joint.p_aa, joint.p_aa).max() < 0.05
        assert frobenius_relative(summed.p_ba - joint.p_ba, joint.p_ba).max() < 0.05

    def test_negative_eigenvalues_warn(self, make_system):
        h_a, h_b = make_system(sources=2)
        small = covariance.oracle_pair(h_a, h_b, [1.0, 1.0])
        large = covariance.oracle_pair(h_a, h_b, [2.0, 2.0])
        diff = covariance.subtract(small, large)
        assert len(diff.warnings) == 1
        assert "negative eigenvalues" in diff.warnings[0]
        np.testing.assert_array_equal(diff.p_aa, conj_transpose(diff.p_aa))

    def test_shape_mismatch_rejected(self, make_system):
        h_a, h_b = make_system(q_b=8)
        a = covariance.oracle_pair(h_a, h_b, np.ones(3))
        b = covariance.oracle_pair(h_a, h_b[:, :5], np.ones(3))
        with pytest.raises(ContractViolationError, match="shapes"):
            covariance.subtract(a, b)
        with pytest.raises(ContractViolationError, match="shapes"):
            covariance.add(a, b)


class TestCovariancePair:
    def test_psd_oracle(self, make_system):
        h_a, h_b = make_system()
        assert covariance.is_psd(covariance.oracle_pair(h_a, h_b, np.ones(3)))

    def test_rejects_zero_frame_count(self):
        with pytest.raises(ContractViolationError, match="frame_count"):
            CovariancePair(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)), frame_count=0)

    def test_rejects_mismatched_p_ba(self):
        with pytest.raises(ContractViolationError, match="does not match"):
            CovariancePair(np.zeros((1, 2, 2)), np.zeros((1, 3, 4)), frame_count=1)

    def test_estimator_consistency(self, make_system):
        h_a, h_b = make_system(bins=2, q_a=2, q_b=2, sources=2)
        oracle = covariance.oracle_pair(h_a, h_b, np.ones(2))
        errors = {}
        for frames in (500, 8000):
            trials = []
            for seed in range(10):
                a, b = mix_frames(np.random.default_rng(seed), h_a, h_b, frames)
                pair = covariance.estimate(a, b)
                trials.append(frobenius_relative(pair.p_aa - oracle.p_aa, oracle.p_aa)[0])
            errors[frames] = np.mean(trials)
        assert errors[8000] < errors[500]
