"""Stable sparse RRT motion planning for hybrid dynamical systems."""

__version__ = "0.1.0"
