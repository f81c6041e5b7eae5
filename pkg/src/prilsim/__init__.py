"""Deterministic TSCH simulator with proactive idle-listening reduction (PRIL-F, PRIL-M, PRIL-ML)."""

__version__ = "0.1.0"
