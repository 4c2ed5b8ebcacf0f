"""Visibility-graph features, a Time-Geometric forecaster, and the statistical
battery used to decide whether forecasting algorithms differ."""

__version__ = "0.1.0"
