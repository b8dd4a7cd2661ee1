"""Adaptive, rendering-state-aware record and replay for GUI scenarios."""

__version__ = "0.1.0"
