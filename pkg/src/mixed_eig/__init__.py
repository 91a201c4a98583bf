"""Discrete first eigenvalue of the mixed local-nonlocal p-Laplacian, with
polarization and Schwarz rearrangements on uniform lattices."""

__version__ = "0.1.0"
