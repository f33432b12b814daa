"""Tracing for pipeline stages and attack runs."""

from paperpuf.observability.tracer import (
    add_stage_metadata,
    initialize_tracing,
    is_tracing_enabled,
    shutdown_tracing,
    trace_stage,
)

__all__ = [
    "add_stage_metadata",
    "initialize_tracing",
    "is_tracing_enabled",
    "shutdown_tracing",
    "trace_stage",
]
