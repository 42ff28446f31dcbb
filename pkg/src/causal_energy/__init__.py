"""Causal Bayesian forecasting of hourly electricity demand."""

__version__ = "0.1.0"
