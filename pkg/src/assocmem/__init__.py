"""Non-binary neural associative memory with sparse learned constraints."""

__version__ = "0.1.0"
