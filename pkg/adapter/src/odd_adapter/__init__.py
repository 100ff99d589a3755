"""Reference detector backend for the line-delimited JSON wire protocol."""

__version__ = "0.1.0"
