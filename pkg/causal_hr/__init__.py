"""Sensitivity analysis for the causal hazard ratio in survival data."""

__version__ = "0.1.0"
