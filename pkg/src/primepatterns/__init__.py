"""Consecutive-prime residue patterns, singular series and the pair conjecture."""

__version__ = "0.1.0"
