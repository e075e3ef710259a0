"""Kontsevich graph calculus on R^d: multivector fields, polydifferential
operators, admissible graphs, configuration-space weights and star products."""

__version__ = "0.1.0"
