from dataclasses import dataclass, replace
from typing import Optional, Tuple
import enum
import math

import numpy as np

from paperpuf.errors import InvalidParam

FULL_SCALE = 65535.0


class CaptureMode(str, enum.Enum):
    SCANNER = "scanner"
    MOBILE = "mobile"


def _cone(count: int, elevation_deg: float) -> np.ndarray:
    elevation = math.radians(elevation_deg)
    azimuths = np.deg2rad(np.arange(count) * 360.0 / count)
    return np.stack(
        [
            math.cos(elevation) * np.cos(azimuths),
            math.cos(elevation) * np.sin(azimuths),
            np.full(count, math.sin(elevation)),
        ],
        axis=-1,
    )


@dataclass(frozen=True, eq=False)
class LightConfig:
    """Light directions (unit vectors from surface toward the light) and source intensity."""

    directions: np.ndarray
    intensity: float
    mode: CaptureMode = CaptureMode.MOBILE

    def __post_init__(self):
        directions = np.array(self.directions, dtype=np.float64, copy=True)
        mode = CaptureMode(self.mode)
        if directions.ndim != 2 or directions.shape[1] != 3:
            raise InvalidParam(f"directions must have shape (k, 3), got {directions.shape}")
        if directions.shape[0] < 3:
            raise InvalidParam("at least 3 light directions are required")
        if np.max(np.abs(np.linalg.norm(directions, axis=1) - 1.0)) > 1e-9:
            raise InvalidParam("light directions must be unit vectors")
        if np.min(directions[:, 2]) <= 0.0:
            raise InvalidParam("light directions must have positive z")
        if not self.intensity > 0:
            raise InvalidParam("intensity must be positive")
        if mode is CaptureMode.SCANNER:
            expected = _cone(4, math.degrees(math.asin(directions[0, 2])))
            if directions.shape[0] != 4 or not np.allclose(directions, expected, atol=1e-9):
                raise InvalidParam("scanner mode uses 4 lights at azimuths 0, 90, 180, 270 and one elevation")
        directions.setflags(write=False)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "intensity", float(self.intensity))

    @classmethod
    def scanner(cls, intensity: float = 60000.0, elevation_deg: float = 45.0) -> "LightConfig":
        """Four scans with the sheet turned through 0, 90, 180 and 270 degrees."""
        return cls(_cone(4, elevation_deg), intensity, CaptureMode.SCANNER)

    @classmethod
    def mobile(cls, count: int, intensity: float = 60000.0, elevation_deg: float = 45.0) -> "LightConfig":
        """
        Lights on a cone around the camera axis; from five lights up, one of them sits at the zenith.
        """
        if count < 3:
            raise InvalidParam("mobile capture needs at least 3 lights")
        if count >= 5:
            directions = np.vstack([_cone(count - 1, elevation_deg), [[0.0, 0.0, 1.0]]])
        else:
            directions = _cone(count, elevation_deg)
        return cls(directions, intensity, CaptureMode.MOBILE)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.directions))


@dataclass(frozen=True, eq=False)
class CaptureSet:
    """
    k grayscale images of one patch, all the same size, in gray levels [0, 65535].

    misalignment holds the (row, column) translation the sensor applied to each
    image. After align(), aligned is True and recovered_offsets holds the
    translation that undid it.
    """

    images: np.ndarray
    lights: LightConfig
    misalignment: np.ndarray
    noise_sigma: float
    max_shift: int = 4
    aligned: bool = False
    recovered_offsets: Optional[np.ndarray] = None
    alignment_ncc: Optional[Tuple[float, ...]] = None
    seed: Optional[int] = None
    specular_weight: float = 0.0
    specular_exponent: float = 20.0

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64, copy=True)
        misalignment = np.array(self.misalignment, dtype=np.int64, copy=True).reshape(-1, 2)
        if images.ndim != 3:
            raise InvalidParam(f"images must have shape (k, H, W), got {images.shape}")
        if images.shape[0] != self.lights.count:
            raise InvalidParam(f"{images.shape[0]} images for {self.lights.count} lights")
        if misalignment.shape[0] != images.shape[0]:
            raise InvalidParam("one misalignment entry is required per image")
        if np.any(np.abs(misalignment) > self.max_shift):
            raise InvalidParam(f"misalignment exceeds max_shift={self.max_shift}")
        if np.min(images) < 0.0 or np.max(images) > FULL_SCALE:
            raise InvalidParam("gray levels must lie in [0, 65535]")
        images.setflags(write=False)
        misalignment.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "misalignment", misalignment)
        if self.recovered_offsets is not None:
            offsets = np.array(self.recovered_offsets, dtype=np.int64, copy=True).reshape(-1, 2)
            offsets.setflags(write=False)
            object.__setattr__(self, "recovered_offsets", offsets)

    @property
    def count(self) -> int:
        return self.images.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.images.shape[1:]

    @property
    def needs_alignment(self) -> bool:
        return bool(np.any(self.misalignment)) and not self.aligned

    def with_images(self, images: np.ndarray, **changes) -> "CaptureSet":
        return replace(self, images=images, **changes)
