from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from paperpuf.errors import NotAligned, RankDeficientLights
from paperpuf.middleware.logging import logger
from paperpuf.models.capture import FULL_SCALE, CaptureSet, LightConfig
from paperpuf.models.normmap import NormMap
from paperpuf.models.surface import SurfacePatch
from paperpuf.observability import trace_stage
from paperpuf.services.optics_service import align, render


@dataclass(frozen=True, eq=False)
class NormalEstimate:
    """Per-pixel least-squares result; only norm_map is the authentication feature."""

    norm_map: NormMap
    residual: np.ndarray
    albedo_scale: np.ndarray
    unreliable: np.ndarray

    @property
    def unreliable_fraction(self) -> float:
        return float(self.unreliable.mean())


def estimate_normals(capture: CaptureSet) -> NormalEstimate:
    """
    Solve min_b sum_k (I_k - l_k . b)^2 per pixel, with b = intensity * albedo * n.

    The 3x3 normal matrix L^T L is shared by every pixel and factored once.
    Pixels with a clipped reading (0 or full scale) drop those equations and are
    re-solved from the rest when at least three independent ones remain; otherwise
    they are set to (0, 0) and flagged unreliable.

    Args:
        capture: Aligned capture

    Returns:
        NormalEstimate

    Raises:
        NotAligned: If the capture carries misalignment that align() has not removed
        RankDeficientLights: If the light directions do not span 3D
    """
    if capture.needs_alignment:
        raise NotAligned("capture has unresolved misalignment; run align() first")
    lights = capture.lights.directions
    if np.linalg.matrix_rank(lights) < 3:
        raise RankDeficientLights(f"light directions have rank {np.linalg.matrix_rank(lights)} < 3")

    k = capture.count
    height, width = capture.shape
    readings = capture.images.reshape(k, -1)

    factor = cho_factor(lights.T @ lights)
    b = cho_solve(factor, lights.T @ readings)
    residual = np.sum((readings - lights @ b) ** 2, axis=0)
    unreliable = np.zeros(readings.shape[1], dtype=bool)

    clipped = (readings <= 0.0) | (readings >= FULL_SCALE)
    affected = np.flatnonzero(clipped.any(axis=0))
    if affected.size:
        patterns, inverse = np.unique(clipped[:, affected].T, axis=0, return_inverse=True)
        for pattern_index, pattern in enumerate(patterns):
            pixels = affected[inverse.ravel() == pattern_index]
            keep = ~pattern
            sub_lights = lights[keep]
            if keep.sum() < 3 or np.linalg.matrix_rank(sub_lights) < 3:
                unreliable[pixels] = True
                b[:, pixels] = 0.0
                residual[pixels] = 0.0
                continue
            sub_factor = cho_factor(sub_lights.T @ sub_lights)
            sub_b = cho_solve(sub_factor, sub_lights.T @ readings[keep][:, pixels])
            b[:, pixels] = sub_b
            residual[pixels] = np.sum((readings[keep][:, pixels] - sub_lights @ sub_b) ** 2, axis=0)

    magnitude = np.linalg.norm(b, axis=0)
    degenerate = magnitude == 0.0
    unreliable |= degenerate
    safe = np.where(degenerate, 1.0, magnitude)
    nx = np.where(unreliable, 0.0, b[0] / safe)
    ny = np.where(unreliable, 0.0, b[1] / safe)

    if unreliable.any():
        logger.debug(f"{int(unreliable.sum())} of {unreliable.size} pixels unreliable")

    return NormalEstimate(
        norm_map=NormMap.from_components(nx.reshape(height, width), ny.reshape(height, width)),
        residual=residual.reshape(height, width),
        albedo_scale=(magnitude / capture.lights.intensity).reshape(height, width),
        unreliable=unreliable.reshape(height, width),
    )


def estimate_norm_map(capture: CaptureSet) -> NormMap:
    return estimate_normals(capture).norm_map


def extract_feature(capture: CaptureSet, min_ncc: float = 0.2) -> NormMap:
    """The feature extractor: align the raw capture, then estimate its norm map."""
    with trace_stage("estimator", "extract_feature", images=capture.count, mode=capture.lights.mode.value):
        return estimate_norm_map(align(capture, min_ncc=min_ncc))


def lights_from_settings(settings) -> LightConfig:
    if settings.capture_mode == "scanner":
        return LightConfig.scanner(settings.intensity, settings.light_elevation_deg)
    return LightConfig.mobile(settings.capture_count, settings.intensity, settings.light_elevation_deg)


def capture_and_extract(patch: SurfacePatch, settings, seed: int) -> NormMap:
    """Render a patch under the configured rig and run the honest feature extractor on it."""
    capture = render(
        patch,
        lights_from_settings(settings),
        noise_sigma=settings.noise_sigma,
        seed=seed,
        max_shift=settings.max_shift,
        specular_weight=settings.specular_weight,
        specular_exponent=settings.specular_exponent,
    )
    return extract_feature(capture, min_ncc=settings.min_alignment_ncc)
