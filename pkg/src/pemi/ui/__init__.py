"""Command-line surface and run configuration for PEMI."""
