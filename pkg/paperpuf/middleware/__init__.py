from paperpuf.middleware.logging import LoggingMiddleware, logger

__all__ = ["LoggingMiddleware", "logger"]
