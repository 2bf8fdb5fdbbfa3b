"""Genus enumeration, homogeneous-set discriminants and equidistribution
experiments for positive definite integral quadratic forms."""

__version__ = "0.1.0"
