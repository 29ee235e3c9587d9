"""Spectral simulation of the cubic coupled Schroedinger system on R x T and its resonant limits."""

__version__ = "0.1.0"
