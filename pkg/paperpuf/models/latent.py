from dataclasses import dataclass
from typing import Tuple
import enum

import numpy as np

from paperpuf.errors import InvalidParam


class CodecComponent(str, enum.Enum):
    JOINT = "joint"
    X = "x"
    Y = "y"


@dataclass(frozen=True, eq=False)
class LatentCodec:
    """
    Linear compressor fitted on a holdout set of norm maps.

    mean has d entries, basis is m x d with orthonormal rows, and
    explained_variance holds the m non-increasing sample variances along the rows.
    For a per-component codec d = height * width; for a joint codec d is twice that,
    x field first.
    """

    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray
    height: int
    width: int
    component: CodecComponent = CodecComponent.X
    total_variance: float = 0.0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64, copy=True).ravel()
        basis = np.array(self.basis, dtype=np.float64, copy=True)
        variance = np.array(self.explained_variance, dtype=np.float64, copy=True).ravel()
        component = CodecComponent(self.component)
        if basis.ndim != 2 or basis.shape[1] != mean.size:
            raise InvalidParam(f"basis shape {basis.shape} does not match mean length {mean.size}")
        if variance.size != basis.shape[0] or basis.shape[0] < 1:
            raise InvalidParam("one explained variance is required per basis row")
        expected = self.height * self.width * (2 if component is CodecComponent.JOINT else 1)
        if mean.size != expected:
            raise InvalidParam(f"codec dimension {mean.size} does not fit {self.height}x{self.width} {component.value}")
        if np.any(variance < 0) or np.any(np.diff(variance) > 1e-12 * max(1.0, float(variance[0]))):
            raise InvalidParam("explained variances must be non-negative and non-increasing")
        for array in (mean, basis, variance):
            array.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "explained_variance", variance)
        object.__setattr__(self, "component", component)

    @property
    def m(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def axis_scale(self) -> np.ndarray:
        """Per-axis standard deviation sqrt(lambda_i)."""
        return np.sqrt(self.explained_variance)

    @property
    def explained_fraction(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.ones(self.m) / self.m
        return self.explained_variance / self.total_variance

    @property
    def field_shape(self) -> Tuple[int, int]:
        return (self.height, self.width)
