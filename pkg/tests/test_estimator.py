import numpy as np
import pytest

from paperpuf.config import Settings
from paperpuf.errors import NotAligned, RankDeficientLights
from paperpuf.models.capture import LightConfig
from paperpuf.services.estimator_service import (
    capture_and_extract,
    estimate_normals,
    extract_feature,
)
from paperpuf.services.optics_service import render
from paperpuf.services.scenario_service import matched_unmatched_scores, simulate_sheet
from paperpuf.services.similarity_service import score
from paperpuf.services.surface_service import tilted_patch, true_norm_map


def test_noise_free_capture_recovers_true_normals(patch):
    capture = render(patch, LightConfig.scanner(), noise_sigma=0.0, seed=0, quantize=False)
    estimate = estimate_normals(capture)
    truth = true_norm_map(patch)
    assert np.allclose(estimate.norm_map.nx, truth.nx, atol=1e-9)
    assert np.allclose(estimate.norm_map.ny, truth.ny, atol=1e-9)
    assert np.allclose(estimate.albedo_scale, patch.albedo, atol=1e-9)
    assert estimate.unreliable_fraction == 0.0


def test_tilted_plane_under_mobile_lights():
    plane = tilted_patch(8, (0.2, -0.1, 0.97), albedo=0.6)
    capture = render(plane, LightConfig.mobile(6), noise_sigma=0.0, seed=0, max_shift=0, quantize=False)
    norm_map = estimate_normals(capture).norm_map
    assert np.allclose(norm_map.nx, plane.normals[0, 0, 0])
    assert np.allclose(norm_map.ny, plane.normals[0, 0, 1])


def test_one_clipped_reading_is_solved_from_the_rest():
    plane = tilted_patch(4, (0.3, 0.0, 0.954))
    capture = render(plane, LightConfig.scanner(intensity=80000.0), noise_sigma=0.0, seed=0, quantize=False)
    assert capture.images[0].max() == 65535.0
    estimate = estimate_normals(capture)
    assert estimate.unreliable_fraction == 0.0
    assert np.allclose(estimate.norm_map.nx, plane.normals[0, 0, 0])


def test_too_many_clipped_readings_mark_pixels_unreliable():
    plane = tilted_patch(4, (0.3, 0.0, 0.954))
    capture = render(plane, LightConfig.scanner(intensity=100000.0), noise_sigma=0.0, seed=0, quantize=False)
    estimate = estimate_normals(capture)
    assert estimate.unreliable_fraction == 1.0
    assert not estimate.norm_map.nx.any()


def test_coplanar_lights_are_rejected():
    lights = LightConfig(np.array([[0.6, 0.0, 0.8], [-0.6, 0.0, 0.8], [0.0, 0.0, 1.0]]), 60000.0)
    capture = render(tilted_patch(4, (0.0, 0.0, 1.0)), lights, noise_sigma=0.0, seed=0, max_shift=0)
    with pytest.raises(RankDeficientLights):
        estimate_normals(capture)


def test_misaligned_capture_must_be_aligned_first(patch):
    shifts = np.array([[0, 0], [1, 1], [0, -1], [2, 0]])
    capture = render(patch, LightConfig.mobile(4), noise_sigma=0.0, seed=0, shifts=shifts)
    with pytest.raises(NotAligned):
        estimate_normals(capture)


def test_extract_feature_aligns_then_estimates(patch):
    capture = render(patch, LightConfig.scanner(), noise_sigma=983.0, seed=2)
    assert extract_feature(capture).equals(estimate_normals(capture).norm_map)


def test_matched_capture_correlates_with_truth(patch, settings):
    extracted = capture_and_extract(patch, settings, seed=1)
    result = score(extracted, true_norm_map(patch))
    assert result.corr_x > 0.85 and result.corr_y > 0.85


def test_recaptures_of_one_sheet_match_and_other_sheets_do_not(patch, settings):
    template = capture_and_extract(patch, settings, seed=1)
    again = capture_and_extract(patch, settings, seed=2)
    other = capture_and_extract(simulate_sheet(settings, seed=12), settings, seed=3)
    assert score(again, template).accepts(settings.threshold)
    assert abs(score(other, template).minimum) < 0.2


def test_estimate_ignores_a_global_intensity_scale(patch):
    bright = render(patch, LightConfig.scanner(intensity=60000.0), noise_sigma=0.0, seed=0, quantize=False)
    dim = render(patch, LightConfig.scanner(intensity=20000.0), noise_sigma=0.0, seed=0, quantize=False)
    a, b = estimate_normals(bright).norm_map, estimate_normals(dim).norm_map
    assert np.allclose(a.nx, b.nx, atol=1e-9)
    assert np.allclose(a.ny, b.ny, atol=1e-9)


def test_estimation_error_grows_with_sensor_noise(patch):
    def cosine_distance(noise_sigma):
        capture = render(patch, LightConfig.scanner(), noise_sigma=noise_sigma, seed=4)
        estimate = estimate_normals(capture).norm_map.normals()
        return float(np.mean(1.0 - np.sum(estimate * patch.normals, axis=-1)))

    errors = [cosine_distance(sigma) for sigma in (0.0, 50.0, 200.0, 800.0)]
    assert errors == sorted(errors)
    assert len(set(errors)) == len(errors)


def test_three_mobile_lights_solve_exactly(patch):
    capture = render(patch, LightConfig.mobile(3), noise_sigma=0.0, seed=0, max_shift=0, quantize=False)
    norm_map = estimate_normals(capture).norm_map
    truth = true_norm_map(patch)
    assert np.allclose(norm_map.nx, truth.nx, atol=1e-9)
    assert np.allclose(norm_map.ny, truth.ny, atol=1e-9)
    result = score(norm_map, truth)
    assert result.corr_x > 0.999 and result.corr_y > 0.999


@pytest.fixture(scope="module")
def full_settings() -> Settings:
    return Settings(seed=7, tracing_enabled=False)


def test_full_size_noiseless_pipeline_recovers_the_surface(full_settings):
    sheet = simulate_sheet(full_settings, seed=31)
    noiseless = full_settings.model_copy(update={"noise_sigma": 0.0})
    result = score(capture_and_extract(sheet, noiseless, seed=1), true_norm_map(sheet))
    assert result.corr_x > 0.999 and result.corr_y > 0.999


def test_full_size_matched_and_unmatched_pairs(full_settings):
    matched, unmatched = matched_unmatched_scores(full_settings, seed=8, pairs=100)
    assert len(matched) == len(unmatched) == 100
    assert all(s.minimum > 0.9 for s in matched)
    magnitudes = np.abs([[s.corr_x, s.corr_y] for s in unmatched])
    assert magnitudes.mean() < 0.05
    assert np.mean(magnitudes.max(axis=1) < 0.05) >= 0.95
