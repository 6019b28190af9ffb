"""QAOA-trained neural MCMC for spin-glass Boltzmann sampling."""

__version__ = "0.1.0"
