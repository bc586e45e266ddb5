"""Desk-scale virtual proving ground for scenario-based AV verification."""

__version__ = "0.1.0"
