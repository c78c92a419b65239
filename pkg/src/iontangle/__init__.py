"""Dissipative entanglement of two trapped ions: models, dynamics, steady states."""

__version__ = "0.1.0"
