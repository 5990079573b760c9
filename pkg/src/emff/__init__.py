"""Electromagnetic formation flight: dynamics, control and dipole allocation."""

__version__ = "0.1.0"
