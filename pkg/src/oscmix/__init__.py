"""Numerical companion for exponential mixing of anharmonic oscillator
networks driven by degenerate noise."""

__version__ = "0.1.0"
