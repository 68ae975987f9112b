"""Finite-element reconstruction of diffusion and absorption in quantitative photoacoustic tomography."""

__version__ = "0.1.0"
