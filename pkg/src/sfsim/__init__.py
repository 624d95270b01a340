"""Schroedinger-Feynman simulation of two sporadically coupled disordered chains."""

__version__ = "0.1.0"
