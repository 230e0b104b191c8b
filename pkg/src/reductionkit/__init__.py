"""Executable reduction chain from Pauli lattices to continuum band models."""

__version__ = "0.1.0"
