"""Losses, optimizer, parameter accounting and the training loop."""
