"""Homophone-based label smoothing for character-level sequence models."""

__version__ = "0.1.0"
