"""Puzzles, tableaux and dual nests of quadratic polynomials."""

__version__ = "0.1.0"
