"""Rough polyharmonic splines: coarse interpolation bases for divergence-form
elliptic operators with rough coefficients."""

__version__ = "0.1.0"
