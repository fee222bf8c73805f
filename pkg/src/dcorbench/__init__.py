"""Fisheye distortion correction before vs after coding: a rate-distortion benchmark."""

__version__ = "0.1.0"
