"""Isotropic quantum Boltzmann collision operators and their semi-classical limit."""

__version__ = "0.1.0"
