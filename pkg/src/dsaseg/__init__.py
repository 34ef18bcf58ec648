"""Vessel segmentation of DSA sequences with a spatio-temporal U-shaped network."""
__version__ = "0.1.0"
