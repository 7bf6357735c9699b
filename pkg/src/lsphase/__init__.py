"""Local-phase analysis of oriented patterns with minutia detection."""

__version__ = "0.1.0"
