"""Entropy-stable h/p-nonconforming summation-by-parts solver for compressible flow."""

__version__ = "0.1.0"
