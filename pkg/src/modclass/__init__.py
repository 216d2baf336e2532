"""Modulation-classification toolkit: I/Q synthesis, SE-MSFN training, evaluation."""

__version__ = "0.1.0"
