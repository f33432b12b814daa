from dataclasses import dataclass

import numpy as np

from paperpuf.errors import InvalidParam


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    """
    Ground-truth microstructure of one paper patch.

    normals has shape (height, width, 3) with unit rows and positive z;
    albedo has shape (height, width) with values in (0, 1].
    """

    normals: np.ndarray
    albedo: np.ndarray
    correlation_length: float
    roughness: float

    def __post_init__(self):
        normals = np.array(self.normals, dtype=np.float64, copy=True)
        albedo = np.array(self.albedo, dtype=np.float64, copy=True)
        if normals.ndim != 3 or normals.shape[2] != 3:
            raise InvalidParam(f"normals must have shape (H, W, 3), got {normals.shape}")
        if albedo.shape != normals.shape[:2]:
            raise InvalidParam(f"albedo shape {albedo.shape} does not match normals {normals.shape[:2]}")
        if not (np.isfinite(normals).all() and np.isfinite(albedo).all()):
            raise InvalidParam("patch contains non-finite values")
        if np.max(np.abs(np.linalg.norm(normals, axis=-1) - 1.0)) > 1e-9:
            raise InvalidParam("normals must have unit length")
        if np.min(normals[..., 2]) <= 0.0:
            raise InvalidParam("normals must point out of the surface (z > 0)")
        if np.min(albedo) <= 0.0 or np.max(albedo) > 1.0:
            raise InvalidParam("albedo must lie in (0, 1]")
        normals.setflags(write=False)
        albedo.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "albedo", albedo)

    @property
    def height(self) -> int:
        return self.normals.shape[0]

    @property
    def width(self) -> int:
        return self.normals.shape[1]

    @property
    def shape(self):
        return self.normals.shape[:2]

    def equals(self, other: "SurfacePatch") -> bool:
        return (
            np.array_equal(self.normals, other.normals)
            and np.array_equal(self.albedo, other.albedo)
            and self.correlation_length == other.correlation_length
            and self.roughness == other.roughness
        )


@dataclass(frozen=True)
class PaperStock:
    """Texture shared by every sheet cut from one paper type."""

    seed: int
    rank: int = 32
    weight: float = 0.7

    def __post_init__(self):
        if self.rank < 1:
            raise InvalidParam("stock rank must be at least 1")
        if not 0.0 <= self.weight < 1.0:
            raise InvalidParam("stock weight must lie in [0, 1)")
