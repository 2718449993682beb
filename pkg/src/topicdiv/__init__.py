"""Topical diversity of document corpora and panel estimators for treatment effects on it."""

__version__ = "0.1.0"
