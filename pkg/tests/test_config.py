import logging

import pytest
from pydantic import ValidationError

from paperpuf.config import Settings, load_settings


def test_defaults():
    settings = Settings()
    assert settings.threshold == 0.3
    assert settings.capture_mode == "scanner" and settings.capture_count == 4
    assert settings.variance_target == 0.99


@pytest.mark.parametrize(
    "overrides",
    [
        {"threshold": 0.0},
        {"threshold": 1.0},
        {"roughness": 0.0},
        {"correlation_length": 0.5},
        {"patch_size": 8},
        {"noise_sigma": -1.0},
        {"subset_fraction": 0.0},
        {"capture_count": 2, "capture_mode": "mobile"},
        {"capture_count": 6},
    ],
)
def test_invalid_values_are_rejected(overrides):
    with pytest.raises(ValidationError):
        Settings(**overrides)


def test_mobile_mode_takes_any_count_from_three():
    assert Settings(capture_mode="mobile", capture_count=6).capture_count == 6


def test_environment_prefix(monkeypatch):
    monkeypatch.setenv("PAPERPUF_THRESHOLD", "0.4")
    monkeypatch.setenv("PAPERPUF_PATCH_SIZE", "64")
    settings = Settings()
    assert settings.threshold == 0.4 and settings.patch_size == 64


def test_toml_file_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('patch_size = 48\nseed = 3\ncapture_mode = "mobile"\ncapture_count = 5\n')
    settings = load_settings(str(path), seed=11)
    assert settings.patch_size == 48
    assert settings.capture_mode == "mobile" and settings.capture_count == 5
    assert settings.seed == 11


def test_unset_overrides_keep_file_values(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("seed = 3\n")
    assert load_settings(str(path), seed=None).seed == 3


def test_unknown_keys_are_ignored_with_a_warning(tmp_path, caplog):
    path = tmp_path / "run.toml"
    path.write_text("patch_size = 40\nlens = \"macro\"\n")
    with caplog.at_level(logging.WARNING):
        settings = load_settings(str(path))
    assert settings.patch_size == 40
    assert "lens" in caplog.text
