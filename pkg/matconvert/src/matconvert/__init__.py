"""NASA battery aging container to canonical per-cycle CSV converter."""

__version__ = "0.1.0"

from .convert import ConversionError, ConversionReport, convert
