"""Interaction Quality estimation from interaction parameters."""

__version__ = "0.1.0"
