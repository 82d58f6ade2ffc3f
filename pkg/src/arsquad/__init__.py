"""Augmented random search for linear quadcopter control."""

__version__ = "0.1.0"
