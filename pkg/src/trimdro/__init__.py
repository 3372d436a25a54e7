"""Distributionally robust conditional stochastic programs over trimmed Wasserstein sets."""

__version__ = "0.1.0"
