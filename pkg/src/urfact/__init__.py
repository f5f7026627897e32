"""Fact-checking engine and factuality benchmark harness for Urdu text."""

__version__ = "0.1.0"
