from typing import Optional, Tuple

import numpy as np

from paperpuf.errors import AlignmentFailed, ConstantInput, InvalidParam
from paperpuf.middleware.logging import logger
from paperpuf.models.capture import FULL_SCALE, CaptureMode, CaptureSet, LightConfig
from paperpuf.models.surface import SurfacePatch
from paperpuf.services.similarity_service import standardize

VIEW_DIRECTION = np.array([0.0, 0.0, 1.0])


def irradiance(
    patch: SurfacePatch,
    lights: LightConfig,
    specular_weight: float = 0.0,
    specular_exponent: float = 20.0,
) -> np.ndarray:
    """
    Noise-free images of shape (k, H, W): intensity * albedo * max(0, n.l),
    plus w_s * intensity * max(0, r.v)^p when the specular weight is non-zero.
    """
    shading = np.einsum("hwc,kc->khw", patch.normals, lights.directions)
    images = lights.intensity * patch.albedo[None] * np.clip(shading, 0.0, None)
    if specular_weight > 0:
        # mirror direction r = 2 (n.l) n - l
        mirror = 2.0 * shading[..., None] * patch.normals[None] - lights.directions[:, None, None, :]
        r_z = mirror @ VIEW_DIRECTION
        lit = shading > 0
        images = images + specular_weight * lights.intensity * np.where(
            lit, np.clip(r_z, 0.0, None) ** specular_exponent, 0.0
        )
    return images


def render(
    patch: SurfacePatch,
    lights: LightConfig,
    noise_sigma: float,
    seed: int,
    max_shift: int = 4,
    specular_weight: float = 0.0,
    specular_exponent: float = 20.0,
    shifts: Optional[np.ndarray] = None,
    quantize: bool = True,
) -> CaptureSet:
    """
    Simulate the sensor: shade, translate, add noise, quantize to 16 bits.

    In mobile mode every image but the first is translated by a random integer
    offset in [-max_shift, max_shift] on each axis; scanner captures are never
    translated unless ``shifts`` injects offsets explicitly.

    Args:
        patch: Surface to image
        lights: Illumination
        noise_sigma: Std of additive Gaussian sensor noise, in gray levels
        seed: Seed for translations and noise
        max_shift: Largest translation per axis
        specular_weight: Weight of the specular lobe (0 disables it)
        specular_exponent: Phong exponent of the specular lobe
        shifts: Explicit (k, 2) row/column translations
        quantize: Round to integer gray levels

    Returns:
        CaptureSet
    """
    if noise_sigma < 0:
        raise InvalidParam("noise_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    k = lights.count

    if shifts is not None:
        misalignment = np.asarray(shifts, dtype=np.int64).reshape(k, 2)
    elif lights.mode is CaptureMode.MOBILE and max_shift > 0:
        misalignment = rng.integers(-max_shift, max_shift + 1, size=(k, 2))
        misalignment[0] = 0
    else:
        misalignment = np.zeros((k, 2), dtype=np.int64)

    clean = irradiance(patch, lights, specular_weight, specular_exponent)
    images = np.empty_like(clean)
    for i in range(k):
        images[i] = np.roll(clean[i], shift=tuple(misalignment[i]), axis=(0, 1))
    if noise_sigma > 0:
        images += rng.normal(0.0, noise_sigma, size=images.shape)
    if quantize:
        images = np.rint(images)
    images = np.clip(images, 0.0, FULL_SCALE)

    return CaptureSet(
        images=images,
        lights=lights,
        misalignment=misalignment,
        noise_sigma=float(noise_sigma),
        max_shift=max(max_shift, int(np.max(np.abs(misalignment)))),
        seed=seed,
        specular_weight=specular_weight,
        specular_exponent=specular_exponent,
    )


def _ncc(reference_unit: np.ndarray, image: np.ndarray) -> float:
    try:
        return float(np.dot(reference_unit, standardize(image)))
    except ConstantInput:
        return 0.0


def find_offset(reference: np.ndarray, image: np.ndarray, max_shift: int) -> Tuple[Tuple[int, int], float]:
    """
    Exhaustive integer search for the circular shift of ``image`` that best matches ``reference``.

    Returns:
        ((row, column) shift to apply to image, normalized cross-correlation at that shift)
    """
    try:
        reference_unit = standardize(reference)
    except ConstantInput:
        # nothing to register against; two uniform images are trivially aligned
        return (0, 0), 1.0 if np.ptp(image) == 0 else 0.0
    best_offset, best_ncc = (0, 0), -np.inf
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            ncc = _ncc(reference_unit, np.roll(image, shift=(dy, dx), axis=(0, 1)))
            # ties keep the smaller displacement
            if ncc > best_ncc + 1e-12 or (
                abs(ncc - best_ncc) <= 1e-12 and abs(dy) + abs(dx) < abs(best_offset[0]) + abs(best_offset[1])
            ):
                best_offset, best_ncc = (dy, dx), ncc
    return best_offset, float(best_ncc)


def align(capture: CaptureSet, min_ncc: float = 0.2) -> CaptureSet:
    """
    Register every image to the first one and undo the translations.

    Scanner captures share the scanner bed's registration and keep the zero
    offset; mobile captures are searched within +-max_shift.

    Raises:
        AlignmentFailed: If the best normalized cross-correlation of a searched image is below min_ncc
    """
    if capture.aligned:
        return capture
    reference = capture.images[0]
    radius = 0 if capture.lights.mode is CaptureMode.SCANNER else capture.max_shift
    offsets = [(0, 0)]
    scores = [1.0]
    aligned = [reference]
    for i in range(1, capture.count):
        offset, ncc = find_offset(reference, capture.images[i], radius)
        if radius and ncc < min_ncc:
            logger.warning(f"Alignment failed on image {i}: best NCC {ncc:.3f} < {min_ncc}")
            raise AlignmentFailed(
                f"image {i} could not be aligned (best NCC {ncc:.3f} < {min_ncc})",
                image_index=i,
                best_ncc=ncc,
            )
        offsets.append(offset)
        scores.append(ncc)
        aligned.append(np.roll(capture.images[i], shift=offset, axis=(0, 1)))

    logger.debug(f"Aligned {capture.count} images, offsets {offsets}")
    return capture.with_images(
        np.stack(aligned),
        aligned=True,
        recovered_offsets=np.array(offsets),
        alignment_ncc=tuple(scores),
    )
