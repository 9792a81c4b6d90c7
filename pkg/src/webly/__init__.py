"""Webly-supervised dataset construction: word-variation and image purification."""

__version__ = "0.1.0"
