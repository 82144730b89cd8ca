"""Sum-of-squares controller synthesis for rational polynomial systems."""

__version__ = "0.1.0"
