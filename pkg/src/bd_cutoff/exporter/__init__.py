"""Report serialization."""

from .report_exporter import ReportExporter, config_hash, format_float

__all__ = ["ReportExporter", "config_hash", "format_float"]
