"""Adversarial acoustic-model training for statistical parametric speech synthesis."""

__version__ = "0.1.0"
