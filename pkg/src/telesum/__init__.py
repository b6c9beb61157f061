"""Multimedia summaries of televised events from tweet streams and video frames."""

__version__ = "0.1.0"
