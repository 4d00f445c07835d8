"""Generalized symmetric FastICA and its asymptotic statistics."""
__version__ = "0.1.0"
