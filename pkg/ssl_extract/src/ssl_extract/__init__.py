"""SSL hidden-state extraction to SSLF feature files."""

from .extract import DEFAULT_LAYERS, ExtractJob, ExtractResult, extract

__version__ = "0.1.0"

__all__ = ["DEFAULT_LAYERS", "ExtractJob", "ExtractResult", "extract"]
