"""Patch-based CNN gender classification for offline handwriting."""

__version__ = "0.1.0"
