"""Membrane (discrete bilaplacian) Gaussian field on m-regular trees."""

__version__ = "0.1.0"
