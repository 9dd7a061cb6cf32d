"""Multimodal late-fusion classifier: image CNN plus two sequence LSTMs, built on a small numpy engine."""

__version__ = "0.1.0"
