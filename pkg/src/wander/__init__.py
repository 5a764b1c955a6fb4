"""Novelty-search evolution of prompt pools."""

__version__ = "0.1.0"
