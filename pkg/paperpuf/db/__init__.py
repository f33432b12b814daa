"""
Storage package - binary formats and the template store
"""

from paperpuf.db.database import check_store, close_store, get_store, init_store, use_store
from paperpuf.db.store import TemplateStore

__all__ = [
    "TemplateStore",
    "check_store",
    "close_store",
    "get_store",
    "init_store",
    "use_store",
]
