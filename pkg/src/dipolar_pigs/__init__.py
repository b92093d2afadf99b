"""Path-integral ground-state Monte Carlo for dipolar rotors on 2D lattices."""

__version__ = "0.1.0"
