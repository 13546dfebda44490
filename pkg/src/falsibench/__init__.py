"""Falsification benchmark for causal-discovery-from-prediction claims."""

from .core import LaggedAdjacency, ScoreMatrix, Series

__version__ = "0.1.0"

__all__ = ["LaggedAdjacency", "ScoreMatrix", "Series", "__version__"]
