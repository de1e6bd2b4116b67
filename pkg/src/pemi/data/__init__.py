"""Datasets, synthetic data and shipped hierarchy fixtures."""
