"""Unsupervised graph alignment with a dual-pass GCN encoder and functional maps."""

__version__ = "0.1.0"
