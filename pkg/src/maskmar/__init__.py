"""Desk-scale metal artifact reduction toolkit."""

__version__ = "0.1.0"
