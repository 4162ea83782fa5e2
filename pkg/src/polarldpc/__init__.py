"""Layered ("polarized") LDPC ensembles over the binary symmetric channel."""

__version__ = "0.1.0"
