from dataclasses import dataclass
from typing import Tuple
import enum
import math

import numpy as np

from paperpuf.errors import DimensionMismatch, InvalidParam

# float32 storage can push a unit-disk value past 1 by a few ulps
_DISK_SLACK = 1e-6


class Component(str, enum.Enum):
    X = "x"
    Y = "y"
    MIN = "min"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class NormMap:
    """
    The authentication feature: projected x and y components of per-pixel unit normals.

    Arrays are float64, row-major with shape (height, width), and read-only.
    """

    nx: np.ndarray
    ny: np.ndarray

    def __post_init__(self):
        nx = _frozen(self.nx)
        ny = _frozen(self.ny)
        if nx.ndim != 2 or nx.shape != ny.shape:
            raise DimensionMismatch(f"nx {nx.shape} and ny {ny.shape} must be equal 2-D fields")
        if nx.shape[0] < 1 or nx.shape[1] < 1:
            raise InvalidParam("norm map must have positive width and height")
        if not (np.isfinite(nx).all() and np.isfinite(ny).all()):
            raise InvalidParam("norm map contains non-finite values")
        if float(np.max(nx * nx + ny * ny)) > 1.0 + _DISK_SLACK:
            raise InvalidParam("norm map has a pixel outside the unit disk")
        object.__setattr__(self, "nx", nx)
        object.__setattr__(self, "ny", ny)

    @classmethod
    def from_components(cls, nx: np.ndarray, ny: np.ndarray) -> "NormMap":
        """Build a map, scaling any pixel outside the unit disk back onto it."""
        nx = np.asarray(nx, dtype=np.float64)
        ny = np.asarray(ny, dtype=np.float64)
        radius = np.sqrt(nx * nx + ny * ny)
        outside = radius > 1.0
        if outside.any():
            scale = np.where(outside, 1.0 / np.maximum(radius, 1e-300), 1.0)
            nx = nx * scale
            ny = ny * scale
        return cls(nx, ny)

    @classmethod
    def zeros(cls, height: int, width: int) -> "NormMap":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @property
    def height(self) -> int:
        return self.nx.shape[0]

    @property
    def width(self) -> int:
        return self.nx.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.nx.shape

    @property
    def size(self) -> int:
        return self.nx.size

    def component(self, component: Component | str) -> np.ndarray:
        component = Component(component)
        if component is Component.X:
            return self.nx
        if component is Component.Y:
            return self.ny
        raise InvalidParam("only the x and y components are fields")

    def with_component(self, component: Component | str, field: np.ndarray) -> "NormMap":
        """
        Replace one component, keeping the other exactly.

        Where a pixel would leave the unit disk the new component is clipped to
        +-sqrt(1 - other^2).
        """
        field = np.asarray(field, dtype=np.float64).reshape(self.shape)
        component = Component(component)
        if component is Component.MIN:
            raise InvalidParam("only the x and y components are fields")
        other = self.ny if component is Component.X else self.nx
        limit = np.sqrt(np.clip(1.0 - other * other, 0.0, None))
        field = np.clip(field, -limit, limit)
        if component is Component.X:
            return NormMap(field, self.ny)
        return NormMap(self.nx, field)

    def nz(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.nx * self.nx - self.ny * self.ny, 0.0, None))

    def normals(self) -> np.ndarray:
        """Unit normals with z reconstructed as sqrt(1 - nx^2 - ny^2)."""
        return np.stack([self.nx, self.ny, self.nz()], axis=-1)

    def at_file_precision(self) -> "NormMap":
        """The map exactly as a .nmap file stores it (float32 components)."""
        return NormMap(self.nx.astype(np.float32), self.ny.astype(np.float32))

    def __neg__(self) -> "NormMap":
        return NormMap(-self.nx, -self.ny)

    def equals(self, other: "NormMap") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.nx, other.nx)
            and np.array_equal(self.ny, other.ny)
        )


@dataclass(frozen=True)
class SimilarityScore:
    corr_x: float
    corr_y: float

    def __post_init__(self):
        for name in ("corr_x", "corr_y"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or abs(value) > 1.0 + 1e-12:
                raise InvalidParam(f"{name}={value} is not a correlation coefficient")
            object.__setattr__(self, name, value)

    @property
    def minimum(self) -> float:
        return min(self.corr_x, self.corr_y)

    def component(self, component: Component | str) -> float:
        component = Component(component)
        if component is Component.X:
            return self.corr_x
        if component is Component.Y:
            return self.corr_y
        return self.minimum

    def accepts(self, threshold: float) -> bool:
        return self.minimum >= threshold
