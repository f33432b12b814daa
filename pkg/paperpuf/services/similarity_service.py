from dataclasses import dataclass
from typing import Sequence, Union
import math

import numpy as np

from paperpuf.errors import ConstantInput, DimensionMismatch, LengthMismatch
from paperpuf.models.normmap import NormMap, SimilarityScore

ArrayLike = Union[Sequence[float], np.ndarray]
_CONSTANT_TOLERANCE = 1e-12


def standardize(values: ArrayLike) -> np.ndarray:
    """
    Center a vector and scale it to unit Euclidean norm.

    Raises:
        ConstantInput: If the vector has zero variance up to rounding
    """
    vector = np.asarray(values, dtype=np.float64).ravel()
    if vector.size < 2:
        raise LengthMismatch("correlation needs at least two samples")
    mean = float(vector.mean())
    centered = vector - mean
    norm = float(np.sqrt(np.dot(centered, centered)))
    # rounding in the mean leaves a residue of order eps * |mean| per sample
    if not np.isfinite(norm) or norm <= _CONSTANT_TOLERANCE * max(1.0, abs(mean)) * math.sqrt(vector.size):
        raise ConstantInput("input vector has zero variance")
    return centered / norm


def pearson(a: ArrayLike, b: ArrayLike) -> float:
    """
    Pearson correlation coefficient of two equal-length vectors.

    Args:
        a: First vector
        b: Second vector

    Returns:
        Coefficient in [-1, 1]

    Raises:
        LengthMismatch: If the vectors differ in length or have fewer than two entries
        ConstantInput: If either vector is constant
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} != {b.size}")
    return float(np.clip(np.dot(standardize(a), standardize(b)), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class PreparedReference:
    """A reference map with both components standardized once, for repeated scoring."""

    shape: tuple
    unit_x: np.ndarray
    unit_y: np.ndarray

    @classmethod
    def of(cls, reference: NormMap) -> "PreparedReference":
        return cls(reference.shape, standardize(reference.nx), standardize(reference.ny))

    def score(self, query: NormMap) -> SimilarityScore:
        if query.shape != self.shape:
            raise DimensionMismatch(f"query {query.shape} vs reference {self.shape}")
        corr_x = float(np.clip(np.dot(standardize(query.nx), self.unit_x), -1.0, 1.0))
        corr_y = float(np.clip(np.dot(standardize(query.ny), self.unit_y), -1.0, 1.0))
        return SimilarityScore(corr_x, corr_y)


def score(query: NormMap, reference: NormMap) -> SimilarityScore:
    """Per-component Pearson correlation of two equally sized norm maps."""
    if query.shape != reference.shape:
        raise DimensionMismatch(f"query {query.shape} vs reference {reference.shape}")
    return PreparedReference.of(reference).score(query)


def l2_distance(query: NormMap, reference: NormMap) -> float:
    """Euclidean distance over both components; a metric only, never a decision rule."""
    if query.shape != reference.shape:
        raise DimensionMismatch(f"query {query.shape} vs reference {reference.shape}")
    return float(np.sqrt(np.sum((query.nx - reference.nx) ** 2 + (query.ny - reference.ny) ** 2)))
