"""Product-state and sampling-based approximation for dense local Hamiltonians."""

__version__ = "0.1.0"
