"""Measure political leaning and emotional tone in news-outlet coverage."""

__version__ = "0.1.0"
