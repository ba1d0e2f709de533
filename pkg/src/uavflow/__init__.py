"""Markov-modulated fluid-queue models of UAV traffic links."""

__version__ = "0.1.0"
