from pydantic import field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Any, Dict, Literal, Optional
from functools import lru_cache
from pathlib import Path
import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class Settings(BaseSettings):
    # Server settings
    app_name: str = "Paper PUF Verification API"
    app_version: str = "1.0.0"
    app_description: str = "Norm-map enrollment and verification for paper PUFs"
    app_env: str = "development"
    debug: bool = False
    store_path: str = "store"

    # Run
    seed: int = 0

    # Surface synthesis
    patch_size: int = 200
    correlation_length: float = 2.0
    roughness: float = 0.08
    albedo_base: float = 0.75
    albedo_variation: float = 0.12

    # Paper stock shared by sheets of one paper type
    stock_rank: int = 32
    stock_weight: float = 0.7

    # Capture and decision
    threshold: float = 0.3
    capture_count: int = 4
    capture_mode: Literal["scanner", "mobile"] = "scanner"
    noise_sigma: float = 983.0
    intensity: float = 60000.0
    light_elevation_deg: float = 45.0
    max_shift: int = 4
    min_alignment_ncc: float = 0.2
    specular_weight: float = 0.0
    specular_exponent: float = 20.0

    # Physical attacks
    scratch_width_min: int = 2
    scratch_width_max: int = 4
    scratch_groove_slope: float = 0.35
    scratch_albedo_factor: float = 0.85
    stroke_turn_deg: float = 20.0
    sticker_albedo: float = 0.05
    sticker_jitter: float = 0.002
    ink_albedo_factor: float = 0.01
    ink_smoothing: float = 1.5
    crumple_amplitude: float = 30.0
    crumple_correlation_length: float = 24.0
    crumple_tilt: float = 0.05
    crumple_crease_slope: float = 0.4
    crumple_crease_length: float = 3.0
    ironing: float = 0.7
    crease_width: float = 6.0
    fold_offset: float = 6.0

    # Digital attacks
    subset_fraction: float = 0.02
    budget: int = 10000
    variance_target: float = 0.99
    powell_line_tol: float = 1e-3
    cg_fd_step: float = 1e-3
    cg_step: float = 2.0

    # Observability (optional)
    tracing_enabled: bool = False
    otlp_endpoint: Optional[str] = None
    tracing_service_name: str = "paperpuf"

    # Logging
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PAPERPUF_",
        case_sensitive=False,
        extra="ignore"
    )

    @field_validator("threshold")
    @classmethod
    def _threshold_open_unit(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        return value

    @field_validator("roughness")
    @classmethod
    def _roughness_range(cls, value: float) -> float:
        if not 0.0 < value <= 0.5:
            raise ValueError("roughness must lie in (0, 0.5]")
        return value

    @field_validator("correlation_length")
    @classmethod
    def _correlation_length_min(cls, value: float) -> float:
        if value < 1.0:
            raise ValueError("correlation_length must be at least 1 pixel")
        return value

    @field_validator("patch_size")
    @classmethod
    def _patch_size_min(cls, value: int) -> int:
        if value < 16:
            raise ValueError("patch_size must be at least 16")
        return value

    @field_validator("noise_sigma", "max_shift")
    @classmethod
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError("must be non-negative")
        return value

    @field_validator("subset_fraction")
    @classmethod
    def _fraction(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError("subset_fraction must lie in (0, 1]")
        return value

    @model_validator(mode="after")
    def _capture_count_matches_mode(self) -> "Settings":
        if self.capture_count < 3:
            raise ValueError("capture_count must be at least 3")
        if self.capture_mode == "scanner" and self.capture_count != 4:
            raise ValueError("scanner mode captures exactly 4 images")
        return self


@lru_cache()
def get_settings() -> Settings:
    return Settings()


def load_settings(config_path: Optional[str] = None, **overrides: Any) -> Settings:
    """
    Build settings from the environment, an optional TOML file and explicit overrides.

    Args:
        config_path: Flat TOML table whose keys are Settings field names
        **overrides: Values that win over both the file and the environment

    Returns:
        Settings instance
    """
    data: Dict[str, Any] = {}
    if config_path:
        with open(Path(config_path), "rb") as handle:
            data = tomllib.load(handle)
        unknown = sorted(set(data) - set(Settings.model_fields))
        if unknown:
            logging.getLogger(__name__).warning(f"Ignoring unknown config keys: {', '.join(unknown)}")
            for key in unknown:
                data.pop(key)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return Settings(**data)
