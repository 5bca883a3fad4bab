"""Bounds that separate real from complex quantum models in a three-observer network."""

__version__ = "0.1.0"
