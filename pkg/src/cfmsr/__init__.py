"""Coupling flow matching for latent super-resolution, on numpy."""

__version__ = "0.1.0"
