"""Hourly event-occurrence analysis: ingestion, imputation, statistics, models, attribution, evaluation."""

__version__ = "0.1.0"
