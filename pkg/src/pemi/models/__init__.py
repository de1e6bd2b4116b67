"""Core models for PEMI: encoder, template, hierarchy and verbalizer."""
