"""Exact Fock-space simulation of lossy linear-optical GHZ fusion."""

__version__ = "0.1.0"
