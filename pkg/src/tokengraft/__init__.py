"""Tokenizer transplantation and supertoken training toolkit."""

__version__ = "0.1.0"
