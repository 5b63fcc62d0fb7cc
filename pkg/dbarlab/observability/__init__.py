"""
Observability for experiment runs.

This module provides:
- TracingKit: JSON Lines tracing of experiments, stages, notices and breaches
- plots: optional SVG heatmaps and line plots
"""

from .tracing import TraceEvent, TracingKit, format_trace, load_trace, summarize

__all__ = [
    "TracingKit",
    "TraceEvent",
    "format_trace",
    "load_trace",
    "summarize",
]
