"""SIGNA: single-view graph contrastive learning with soft neighborhood awareness."""

__version__ = "0.1.0"
