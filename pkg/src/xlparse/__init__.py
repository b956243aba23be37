"""Cross-lingual dependency parsing with order-free and order-sensitive models."""

__version__ = "0.1.0"
