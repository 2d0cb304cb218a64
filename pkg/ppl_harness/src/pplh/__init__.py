"""Perplexity evaluation harness for transplanted embeddings."""

__version__ = "0.1.0"
