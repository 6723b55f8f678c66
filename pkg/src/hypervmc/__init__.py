"""Variational Monte Carlo with recurrent wavefunctions on flat and hyperbolic geometry."""

__version__ = "0.1.0"
