import numpy as np
import pytest

from paperpuf.config import Settings
from paperpuf.db.store import TemplateStore
from paperpuf.models.normmap import NormMap
from paperpuf.services.scenario_service import simulate_sheet


@pytest.fixture
def settings() -> Settings:
    return Settings(patch_size=32, seed=7, tracing_enabled=False)


@pytest.fixture
def patch(settings):
    return simulate_sheet(settings, seed=11)


@pytest.fixture
def store() -> TemplateStore:
    return TemplateStore.in_memory(threshold=0.3)


@pytest.fixture
def make_map():
    """Random norm maps with pixels well inside the unit disk."""

    def factory(seed: int = 0, size: int = 16, scale: float = 0.1) -> NormMap:
        rng = np.random.default_rng(seed)
        return NormMap(scale * rng.standard_normal((size, size)), scale * rng.standard_normal((size, size)))

    return factory
