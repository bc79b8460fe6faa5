"""Pinning-based distributed secondary control for islanded microgrids."""

__version__ = "0.1.0"
