"""Contrastive training and serving for the CTI-rule bi-encoder."""

__version__ = "0.1.0"
