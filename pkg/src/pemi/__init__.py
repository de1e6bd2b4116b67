"""PEMI: parameter-efficient prompt tuning with hierarchical label refining."""

__version__ = "0.1.0"
