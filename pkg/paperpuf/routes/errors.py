from fastapi import HTTPException

from paperpuf.errors import DuplicateId, EmptyStore, PufError, UnknownId
from paperpuf.middleware.logging import logger


def to_http(error: PufError) -> HTTPException:
    """Map a domain error onto its HTTP status."""
    if isinstance(error, UnknownId):
        status = 404
    elif isinstance(error, (DuplicateId, EmptyStore)):
        status = 409
    else:
        status = 422
    logger.warning(f"{type(error).__name__}: {error}")
    return HTTPException(status_code=status, detail=f"{type(error).__name__}: {error}")
