"""Exact-diagonalization statistics of observables after a small quantum quench."""

__version__ = "0.1.0"
