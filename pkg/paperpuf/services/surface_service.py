from functools import lru_cache
import math
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from paperpuf.errors import InvalidParam
from paperpuf.middleware.logging import logger
from paperpuf.models.normmap import NormMap
from paperpuf.models.surface import PaperStock, SurfacePatch


def correlated_field(rng: np.random.Generator, shape: Tuple[int, int], correlation_length: float) -> np.ndarray:
    """
    Zero-mean, unit-variance Gaussian random field.

    White noise is smoothed with a periodic Gaussian kernel of std
    correlation_length / sqrt(2), which puts the autocorrelation at lag
    correlation_length at exp(-1/2).
    """
    white = rng.standard_normal(shape)
    smoothed = gaussian_filter(white, sigma=correlation_length / math.sqrt(2.0), mode="wrap")
    return _standardize(smoothed)


def _standardize(field: np.ndarray) -> np.ndarray:
    centered = field - field.mean()
    std = centered.std()
    return centered / std if std > 0 else centered


def normals_from_slopes(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Unit normals (-p, -q, 1) / norm of the height field with gradients p, q."""
    normals = np.stack([-p, -q, np.ones_like(p)], axis=-1)
    return normals / np.linalg.norm(normals, axis=-1, keepdims=True)


def slopes_from_normals(normals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return -normals[..., 0] / normals[..., 2], -normals[..., 1] / normals[..., 2]


@lru_cache(maxsize=4)
def _stock_fields(stock: PaperStock, shape: Tuple[int, int], correlation_length: float) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([stock.seed, shape[0], shape[1]]))
    fields = np.stack(
        [
            np.stack([correlated_field(rng, shape, correlation_length) for _ in range(stock.rank)])
            for _axis in range(2)
        ]
    )
    fields.setflags(write=False)
    return fields


def generate_patch(
    seed: int,
    size: int = 200,
    correlation_length: float = 2.0,
    roughness: float = 0.08,
    albedo_base: float = 0.75,
    albedo_variation: float = 0.12,
    stock: Optional[PaperStock] = None,
) -> SurfacePatch:
    """
    Synthesize one paper patch.

    Slopes are correlated Gaussian fields rescaled to the target roughness; the
    normals follow from the slopes. Albedo is a base level with a small
    correlated fluctuation. With a stock, each slope field mixes in the stock's
    shared fields with per-sheet Gaussian weights before rescaling.

    Args:
        seed: Sheet seed
        size: Edge length in pixels, at least 16
        correlation_length: Slope correlation length in pixels, at least 1
        roughness: Slope standard deviation in (0, 0.5]
        albedo_base: Mean albedo
        albedo_variation: Relative std of the albedo fluctuation
        stock: Paper stock the sheet is cut from, or None for an independent sheet

    Returns:
        SurfacePatch

    Raises:
        InvalidParam: On out-of-range inputs
    """
    if size < 16:
        raise InvalidParam(f"size must be at least 16, got {size}")
    if correlation_length < 1:
        raise InvalidParam(f"correlation_length must be at least 1 pixel, got {correlation_length}")
    if not 0.0 < roughness <= 0.5:
        raise InvalidParam(f"roughness must lie in (0, 0.5], got {roughness}")
    if not 0.0 < albedo_base <= 1.0 or albedo_variation < 0:
        raise InvalidParam("albedo_base must lie in (0, 1] and albedo_variation must be non-negative")

    shape = (size, size)
    rng = np.random.default_rng(seed)
    p = correlated_field(rng, shape, correlation_length)
    q = correlated_field(rng, shape, correlation_length)
    albedo_field = correlated_field(rng, shape, correlation_length)

    if stock is not None and stock.weight > 0:
        fields = _stock_fields(stock, shape, correlation_length)
        own = math.sqrt(1.0 - stock.weight)
        shared = math.sqrt(stock.weight / stock.rank)
        weights = rng.standard_normal((2, stock.rank))
        p = _standardize(own * p + shared * np.tensordot(weights[0], fields[0], axes=1))
        q = _standardize(own * q + shared * np.tensordot(weights[1], fields[1], axes=1))

    normals = normals_from_slopes(roughness * p, roughness * q)
    albedo = np.clip(albedo_base * (1.0 + albedo_variation * albedo_field), 0.02, 1.0)
    logger.debug(f"Generated patch seed={seed} size={size} roughness={roughness}")
    return SurfacePatch(normals, albedo, float(correlation_length), float(roughness))


def flat_patch(size: int, albedo: float = 1.0) -> SurfacePatch:
    """The roughness -> 0 limit: every normal is (0, 0, 1)."""
    normals = np.zeros((size, size, 3))
    normals[..., 2] = 1.0
    return SurfacePatch(normals, np.full((size, size), albedo), 1.0, 0.0)


def tilted_patch(size: int, normal: Tuple[float, float, float], albedo: float = 1.0) -> SurfacePatch:
    """A plane whose every pixel has the given unit normal."""
    direction = np.asarray(normal, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    normals = np.broadcast_to(direction, (size, size, 3)).copy()
    return SurfacePatch(normals, np.full((size, size), albedo), 1.0, 0.0)


def true_norm_map(patch: SurfacePatch) -> NormMap:
    """Project each unit normal onto its (x, y) components."""
    return NormMap(patch.normals[..., 0], patch.normals[..., 1])
