"""Numerical services for the Legendre BVP solver."""
