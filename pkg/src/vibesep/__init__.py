"""Blind separation of gear and bearing vibration sources."""

__version__ = "0.1.0"
