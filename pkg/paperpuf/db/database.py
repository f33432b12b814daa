from typing import Generator, Optional

from paperpuf.config import get_settings
from paperpuf.db.store import TemplateStore
from paperpuf.middleware.logging import logger

_store: Optional[TemplateStore] = None


def init_store(path: Optional[str] = None, threshold: Optional[float] = None) -> TemplateStore:
    """Open the server's template store (the configured store_path by default)."""
    global _store
    settings = get_settings()
    _store = TemplateStore.open(path or settings.store_path, threshold if threshold is not None else settings.threshold)
    return _store


def use_store(store: TemplateStore) -> TemplateStore:
    """Serve an already opened store, e.g. an in-memory one."""
    global _store
    _store = store
    return _store


def close_store():
    global _store
    _store = None


def get_store() -> Generator[TemplateStore, None, None]:
    if _store is None:
        init_store()
    yield _store


def check_store() -> bool:
    try:
        store = _store or init_store()
        return store.path is None or store.path.is_dir()
    except Exception as e:
        logger.error(f"Store check failed: {e}")
        return False
