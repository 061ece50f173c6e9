"""Gist-token prompt compression on a from-scratch numpy encoder-decoder."""

__version__ = "0.1.0"
