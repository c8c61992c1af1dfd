"""Probabilistic matrix factorization with uniform and personalized differential privacy."""

__version__ = "0.1.0"
