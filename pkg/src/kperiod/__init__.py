"""Floquet analysis of period k-tupling in driven spin systems."""

__version__ = "0.1.0"
