"""Quantum functional encryption, exactly simulated."""

__version__ = "0.1.0"
