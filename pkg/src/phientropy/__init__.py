"""Gamma-calculus, Phi-entropy inequalities and their numerical verification."""

__version__ = "0.1.0"
