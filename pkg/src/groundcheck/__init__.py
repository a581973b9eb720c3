"""Phrase-grounded fact-checking of structured report findings."""

__version__ = "0.1.0"
