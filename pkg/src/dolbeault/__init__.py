"""Dolbeault-operator calculus on compact Hermitian spin surfaces."""

__version__ = "0.1.0"
