"""Immersed isogeometric solver for binary-fluid flow on trimmed 2D domains."""

__version__ = "0.1.0"
