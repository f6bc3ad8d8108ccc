"""Pseudomarket tools for online combinatorial assignment without money."""

__version__ = "0.1.0"
