"""Relativistic BGK kinetic model: closure, dynamics, limits and linearization."""

__version__ = "0.1.0"
