"""Supermodes, dipole emission and resonant transmission of a fiber-taper / channel coupler."""

__version__ = "0.1.0"
