"""Simulation and verification tools for 2D Euler flows with bounded vorticity and unbounded velocity."""

__version__ = "0.1.0"
