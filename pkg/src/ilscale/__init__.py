"""Compute-optimal scaling-law fitting for imitation-learning experiment logs."""

__version__ = "0.1.0"
