"""Numerical study of energy channels for the wave equation linearized around the ground state."""

__version__ = "0.1.0"
