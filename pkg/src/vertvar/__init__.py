"""Numerical toolkit for vertical-geodesic quantum variance of level-one Hecke eigenforms."""

__version__ = "0.1.0"
