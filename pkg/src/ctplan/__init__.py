"""Continual temporal planning engine with interleaved execution."""

__version__ = "0.1.0"
