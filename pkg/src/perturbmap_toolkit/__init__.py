"""Perturb-and-MAP estimation of partition functions and Gibbs sampling."""

__version__ = "0.1.0"
