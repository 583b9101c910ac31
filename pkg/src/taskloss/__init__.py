"""Task-based learning with learned surrogate losses."""

__version__ = "0.1.0"
