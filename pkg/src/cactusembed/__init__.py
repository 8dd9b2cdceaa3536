"""Approximate embedding of service chains and cactus requests via LP rounding."""

__version__ = "0.1.0"
