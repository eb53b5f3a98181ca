"""Fuzzified-window convolutional forecasting."""

__version__ = "0.1.0"
