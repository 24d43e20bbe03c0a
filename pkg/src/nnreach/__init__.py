"""Reachable-set over-approximation for linear systems driven by ReLU
network controllers, via quadratic constraints and semidefinite programming."""

__version__ = "0.1.0"
