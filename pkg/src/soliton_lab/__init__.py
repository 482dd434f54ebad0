"""Numerical laboratory for translating solitons of the alpha-Gauss curvature flow."""
__version__ = "0.1.0"
