"""Coframe structure equations, classifying Lie algebroids and equivalence tests."""

__version__ = "0.1.0"
SCHEMA = "cartan-kit/1"
