"""Evaluation metrics for multi-level predictions."""
