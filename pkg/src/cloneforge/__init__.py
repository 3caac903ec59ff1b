"""Per-anchor image clone detection with an interpretable norm threshold."""

__version__ = "0.1.0"
