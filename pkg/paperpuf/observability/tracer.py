"""OpenTelemetry spans around pipeline stages, attack runs and server calls."""

from typing import Any, Dict, Optional
from contextlib import contextmanager
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, SimpleSpanProcessor, SpanExporter
from opentelemetry.trace import Status, StatusCode

from paperpuf.config.settings import get_settings
from paperpuf.middleware.logging import logger


_tracer_provider: Optional[TracerProvider] = None
_tracer = None


def initialize_tracing(exporter: Optional[SpanExporter] = None) -> Optional[TracerProvider]:
    """
    Start tracing when enabled in settings or when an exporter is passed in.

    Spans go to the OTLP collector named by ``otlp_endpoint`` if set, otherwise
    to ``exporter``. With neither, spans are recorded but not shipped.

    Args:
        exporter: Explicit span exporter (tests pass an in-memory one)

    Returns:
        TracerProvider instance if tracing is active, None otherwise
    """
    global _tracer_provider, _tracer

    if _tracer_provider is not None:
        logger.debug("Tracer already initialized")
        return _tracer_provider

    settings = get_settings()
    if not settings.tracing_enabled and exporter is None:
        logger.debug("Tracing disabled")
        return None

    try:
        provider = TracerProvider(
            resource=Resource.create({"service.name": settings.tracing_service_name})
        )
        if exporter is not None:
            provider.add_span_processor(SimpleSpanProcessor(exporter))
        if settings.otlp_endpoint:
            from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter

            provider.add_span_processor(
                BatchSpanProcessor(OTLPSpanExporter(endpoint=settings.otlp_endpoint))
            )
            logger.info(f"Exporting traces to {settings.otlp_endpoint}")

        _tracer_provider = provider
        _tracer = provider.get_tracer("paperpuf", settings.app_version)
        logger.info(f"Tracing initialized for service {settings.tracing_service_name}")
        return _tracer_provider

    except ImportError as e:
        logger.warning(f"OTLP exporter not installed: {e}")
        return None

    except Exception as e:
        logger.error(f"Failed to initialize tracing: {e}", exc_info=True)
        return None


def shutdown_tracing():
    """Flush pending spans and drop the provider."""
    global _tracer_provider, _tracer

    if _tracer_provider is None:
        return

    try:
        _tracer_provider.force_flush()
        _tracer_provider.shutdown()
        logger.info("Tracer shutdown complete")
    except Exception as e:
        logger.error(f"Error shutting down tracer: {e}", exc_info=True)
    finally:
        _tracer_provider = None
        _tracer = None


def is_tracing_enabled() -> bool:
    return _tracer_provider is not None


@contextmanager
def trace_stage(component: str, action: str, **attributes: Any):
    """
    Open a span named ``component.action`` around a pipeline stage.

    Args:
        component: Module doing the work, e.g. 'estimator', 'digattack'
        action: Operation, e.g. 'extract_feature', 'powell'
        **attributes: Span attributes; None values are skipped

    Usage:
        with trace_stage("digattack", "baseline_greedy", target_id="ref-00-scan-0") as span:
            trace = baseline_greedy(...)
            add_stage_metadata(span, {"function_evals": trace.function_evals})
    """
    if _tracer is None:
        yield None
        return

    with _tracer.start_as_current_span(f"{component}.{action}") as span:
        span.set_attribute("puf.component", component)
        span.set_attribute("puf.action", action)
        add_stage_metadata(span, attributes)
        try:
            yield span
            span.set_status(Status(StatusCode.OK))
        except Exception as e:
            span.set_status(Status(StatusCode.ERROR, str(e)))
            span.record_exception(e)
            raise


def add_stage_metadata(span, metadata: Dict[str, Any]):
    """Attach result attributes to a span; a None span is ignored."""
    if span is None:
        return

    for key, value in metadata.items():
        if value is None:
            continue
        if isinstance(value, (bool, int, float, str)):
            span.set_attribute(f"puf.{key}", value)
        else:
            span.set_attribute(f"puf.{key}", str(value))
