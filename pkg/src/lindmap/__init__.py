"""Driven-dissipative Lindblad toolkit with sign-inverted partner-model mapping."""

__version__ = "0.1.0"
