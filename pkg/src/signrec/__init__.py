"""Sign-aware top-K recommendation on explicit-feedback rating data."""

__version__ = "0.1.0"
