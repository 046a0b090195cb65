"""Randomization-ratio design tools for event-driven survival trials."""

__version__ = "0.1.0"
