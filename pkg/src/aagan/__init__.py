"""Joint future-embedding synthesis and early action anticipation on feature sequences."""

__version__ = "0.1.0"
