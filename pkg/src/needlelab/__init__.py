"""Transport-ray disintegrations and distributional Laplacians on model spaces."""

__version__ = "0.1.0"
