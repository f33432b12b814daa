from fastapi import Request, Response
from starlette.middleware.base import BaseHTTPMiddleware
from starlette.types import ASGIApp
import itertools
import time
import logging
from paperpuf.config import get_settings

settings = get_settings()

# Configure logging
logging.basicConfig(
    level=settings.log_level,
    format="%(asctime)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler()],
)


logger = logging.getLogger("paperpuf")


class LoggingMiddleware(BaseHTTPMiddleware):
    """
    Logs every request to the verification server with a running request number,
    the client host, the status and the duration.
    """

    def __init__(self, app: ASGIApp):
        super().__init__(app)
        self._numbers = itertools.count(1)

    async def dispatch(self, request: Request, call_next) -> Response:
        number = next(self._numbers)
        start_time = time.perf_counter()
        client_host = request.client.host if request.client else "unknown"
        route = f"{request.method} {request.url.path}"

        try:
            response = await call_next(request)
        except Exception as e:
            logger.error(
                f"#{number} {route} from {client_host} failed after "
                f"{time.perf_counter() - start_time:.3f}s: {e}",
                exc_info=True,
            )
            raise

        duration = time.perf_counter() - start_time
        message = f"#{number} {route} from {client_host} -> {response.status_code} in {duration:.3f}s"
        if response.status_code >= 500:
            logger.error(message)
        elif response.status_code >= 400:
            logger.warning(message)
        else:
            logger.debug(message)

        response.headers["X-Process-Time"] = f"{duration:.6f}"
        response.headers["X-Request-Number"] = str(number)
        return response
