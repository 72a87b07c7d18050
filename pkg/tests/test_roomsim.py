"""Tests for src.dsp.roomsim."""

from dataclasses import replace

import numpy as np
import pytest

from src.core.exceptions import ContractViolationError, InfeasibleScenarioError, InputError
from src.core.scenario_model import Room, Scenario
from src.dsp import roomsim
from tests.conftest import tiny_scenario_dict

SOURCE = (0.7, 0.6, 1.1)
MIC = (1.8, 1.4, 0.9)


class TestSabine:
    def test_reflection_coefficient(self):
        room = Room((5.0, 4.0, 3.0), t60=0.5)
        alpha = 0.161 * 60.0 / (94.0 * 0.5)
        assert roomsim.sabine_reflection(room) == pytest.approx(np.sqrt(1.0 - alpha))

    def test_anechoic(self):
        assert roomsim.sabine_reflection(Room((5.0, 4.0, 3.0), t60=0.0)) == 0.0

    def test_infeasible_t60(self):
        with pytest.raises(InfeasibleScenarioError, match="too short"):
            roomsim.sabine_reflection(Room((2.0, 2.0, 2.0), t60=0.05))


class TestGenerateRir:
    def test_direct_path_only_when_anechoic(self):
        room = Room((2.5, 2.0, 2.0), t60=0.0)
        rir = roomsim.generate_rir(room, SOURCE, MIC, 16000)
        distance = np.linalg.norm(np.subtract(SOURCE, MIC))
        tap = int(np.rint(distance * 16000 / 343.0))
        assert np.count_nonzero(rir) == 1
        assert np.argmax(rir) == tap
        assert rir[tap] == pytest.approx(1.0 / (4.0 * np.pi * distance))

    def test_length_follows_t60(self):
        room = Room((2.5, 2.0, 2.0), t60=0.2)
        assert roomsim.rir_length(room, SOURCE, MIC, 16000) == 3200
        assert roomsim.generate_rir(room, SOURCE, MIC, 16000).size == 3200

    def test_measured_t60_close_to_target(self):
        room = Room((2.5, 2.0, 2.0), t60=0.3)
        rir = roomsim.generate_rir(room, SOURCE, MIC, 16000)
        assert roomsim.measure_t60(rir, 16000) == pytest.approx(0.3, rel=0.2)

    def test_max_reflection_order(self):
        room = Room((2.5, 2.0, 2.0), t60=0.3, max_reflection_order=0)
        assert np.count_nonzero(roomsim.generate_rir(room, SOURCE, MIC, 16000)) == 1
        first_order = replace(room, max_reflection_order=1)
        assert 1 < np.count_nonzero(roomsim.generate_rir(first_order, SOURCE, MIC, 16000)) <= 7

    def test_jitter_is_seeded(self):
        room = Room((2.5, 2.0, 2.0), t60=0.2, image_jitter=0.05)
        first = roomsim.generate_rir(room, SOURCE, MIC, 16000, seed=1)
        np.testing.assert_array_equal(first, roomsim.generate_rir(room, SOURCE, MIC, 16000, seed=1))
        assert not np.array_equal(first, roomsim.generate_rir(room, SOURCE, MIC, 16000, seed=2))

    def test_no_jitter_ignores_seed(self):
        room = Room((2.5, 2.0, 2.0), t60=0.2)
        np.testing.assert_array_equal(
            roomsim.generate_rir(room, SOURCE, MIC, 16000, seed=1),
            roomsim.generate_rir(room, SOURCE, MIC, 16000, seed=9),
        )

    def test_position_outside_room(self):
        with pytest.raises(ContractViolationError, match="not strictly inside"):
            roomsim.generate_rir(Room((2.5, 2.0, 2.0), t60=0.2), (3.0, 1.0, 1.0), MIC)

    def test_coincident_positions(self):
        with pytest.raises(ContractViolationError, match="coincides"):
            roomsim.generate_rir(Room((2.5, 2.0, 2.0), t60=0.2), MIC, MIC)


class TestMeasureT60:
    def test_all_zero_response(self):
        with pytest.raises(ContractViolationError, match="all-zero"):
            roomsim.measure_t60(np.zeros(100), 16000)

    def test_exponential_decay(self):
        fs, t60 = 16000, 0.4
        t = np.arange(int(fs * 1.2)) / fs
        rir = np.random.default_rng(0).standard_normal(t.size) * 10.0 ** (-3.0 * t / t60)
        assert roomsim.measure_t60(rir, fs) == pytest.approx(t60, rel=0.05)


# ---------------------------------------------------------------------------
# Layout and rendering
# ---------------------------------------------------------------------------


@pytest.fixture
def unplaced(signal_dir):
    data = tiny_scenario_dict(signal_dir)
    data["microphones"] = {"count": 6}
    for source in data["sources"]:
        source["position"] = None
    return Scenario.from_dict(data)


class TestPlaceRandomly:
    def test_positions_respect_margins(self, unplaced):
        placed = roomsim.place_randomly(unplaced)
        assert placed.is_placed
        assert len(placed.microphones) == 6
        mics = np.asarray(placed.microphones)
        dims = np.asarray(placed.room.dimensions)
        assert np.all(mics >= 0.5) and np.all(mics <= dims - 0.5)
        for source in placed.sources:
            assert np.min(np.linalg.norm(mics - np.asarray(source.position), axis=1)) >= 0.5

    def test_deterministic(self, unplaced):
        assert roomsim.place_randomly(unplaced) == roomsim.place_randomly(unplaced)
        other = roomsim.place_randomly(replace(unplaced, seed=99))
        assert other.microphones != roomsim.place_randomly(unplaced).microphones

    def test_placed_scenario_unchanged(self, tiny_scenario):
        assert roomsim.place_randomly(tiny_scenario) is tiny_scenario

    def test_infeasible_distance(self, unplaced):
        crowded = replace(unplaced, layout_min_distance=10.0)
        with pytest.raises(InfeasibleScenarioError, match="Could not place"):
            roomsim.place_randomly(crowded)


@pytest.fixture
def rendered(tiny_scenario):
    scenario = tiny_scenario.with_snr(-5.0)
    signals = np.random.default_rng(0).standard_normal((3, 16000))
    rirs = roomsim.generate_rirs(scenario)
    return scenario, signals, rirs, roomsim.render_mixture(scenario, signals, rirs)


class TestRender:
    def test_rirs_shape(self, tiny_scenario):
        rirs = roomsim.generate_rirs(tiny_scenario, workers=2)
        assert rirs.shape == (3, 6, 2400)
        np.testing.assert_array_equal(rirs, roomsim.generate_rirs(tiny_scenario))

    def test_snr_calibration(self, rendered):
        _, _, _, session = rendered
        assert session.achieved_snr_db == pytest.approx(-5.0, abs=0.1)
        assert session.images.shape == (3, 6, 16000)

    def test_sensor_noise_level(self, rendered):
        _, _, _, session = rendered
        clean = session.images.sum(axis=0)
        np.testing.assert_allclose(session.mixture, clean + session.sensor_noise, atol=1e-12)
        ratio = 10 * np.log10(np.mean(clean ** 2, axis=1) / np.mean(session.sensor_noise ** 2, axis=1))
        np.testing.assert_allclose(ratio, 50.0, atol=0.5)

    def test_render_is_deterministic(self, rendered):
        scenario, signals, rirs, session = rendered
        again = roomsim.render_mixture(scenario, signals, rirs)
        np.testing.assert_array_equal(again.mixture, session.mixture)

    def test_unplaced_scenario_rejected(self, unplaced):
        with pytest.raises(ContractViolationError, match="placed"):
            roomsim.render_mixture(unplaced, np.zeros((3, 100)))

    def test_calibration_plan(self, tiny_scenario):
        assert roomsim.calibration_plan(tiny_scenario) == {
            "noise_only": (2,),
            "noise_plus_0": (0, 2),
            "noise_plus_1": (1, 2),
            "undesired_0": (1, 2),
            "undesired_1": (0, 2),
        }

    def test_calibration_reuses_session_levels(self, rendered):
        scenario, signals, rirs, session = rendered
        renders = roomsim.render_calibration(scenario, session, signals, rirs)
        assert set(renders) == set(roomsim.calibration_plan(scenario))
        noise_only = renders["noise_only"]
        assert noise_only.noise_gain == session.noise_gain
        np.testing.assert_array_equal(noise_only.sensor_noise_std, session.sensor_noise_std)
        noise_image = session.images[2]
        np.testing.assert_allclose(noise_only.mixture - noise_only.sensor_noise, noise_image, atol=1e-10)
        assert not np.allclose(noise_only.sensor_noise, session.sensor_noise)

    def test_signal_too_short(self, tiny_scenario):
        with pytest.raises(InputError, match="needs"):
            roomsim.load_source_signals(tiny_scenario, 8.0, 5.0)

    def test_signals_loaded_from_files(self, tiny_scenario):
        signals = roomsim.load_source_signals(tiny_scenario, 1.0, 2.0)
        assert signals.shape == (3, 32000)
        assert np.all(np.abs(signals).max(axis=1) > 0)


class TestSuperposition:
    def test_joint_render_is_sum_of_solo_renders(self, tiny_scenario):
        scenario = replace(tiny_scenario, sensor_noise_snr_db=None)
        signals = np.random.default_rng(0).standard_normal((3, 16000))
        rirs = roomsim.generate_rirs(scenario)
        session = roomsim.render_mixture(scenario, signals, rirs)
        assert not np.any(session.sensor_noise)

        solo = [
            roomsim.render_mixture(replace(scenario, sources=scenario.sources[l:l + 1]), signals[l:l + 1], rirs[l:l + 1])
            for l in scenario.speech_indices
        ]
        noise = roomsim.render_calibration(scenario, session, signals, rirs)["noise_only"]
        np.testing.assert_array_equal(solo[0].mixture + solo[1].mixture + noise.mixture, session.mixture)

    def test_anechoic_render_is_delayed_attenuated_copy(self, tiny_scenario):
        scenario = replace(
            tiny_scenario,
            room=replace(tiny_scenario.room, t60=0.0),
            sources=tiny_scenario.sources[:1],
            sensor_noise_snr_db=None,
        )
        signal = np.random.default_rng(1).standard_normal((1, 8000))
        session = roomsim.render_mixture(scenario, signal)
        for q, mic in enumerate(scenario.microphones):
            distance = np.linalg.norm(np.subtract(scenario.sources[0].position, mic))
            delay = int(np.rint(distance * scenario.sample_rate / scenario.room.speed_of_sound))
            expected = np.zeros(8000)
            expected[delay:] = signal[0, :8000 - delay] / (4.0 * np.pi * distance)
            np.testing.assert_allclose(session.mixture[q], expected, atol=1e-12)
