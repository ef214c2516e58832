"""Data-driven gait modelling and optimization for low-bandwidth locomotors."""

__version__ = "0.1.0"
