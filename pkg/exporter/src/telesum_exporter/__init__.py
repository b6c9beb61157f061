"""Offline glue turning raw tweets and media into portable vector files."""

__version__ = "0.1.0"
