"""Periodic billiard orbits in convex surfaces and the equivariant Betti count."""

__version__ = "0.1.0"
