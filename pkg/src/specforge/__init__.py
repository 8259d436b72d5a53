"""Execution-grounded synthetic instruction data pipeline for tabular code."""

from specforge.model import TOOL_VERSION as __version__

__all__ = ["__version__"]
