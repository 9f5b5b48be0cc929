"""Multilingual check-worthiness ranking with a language-identification auxiliary task."""

__version__ = "0.1.0"
