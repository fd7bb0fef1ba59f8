"""Trait prediction from social-media profile features."""

__version__ = "0.1.0"
