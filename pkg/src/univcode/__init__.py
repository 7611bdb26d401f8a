"""Universal channel coding for exponential-family channels."""

__version__ = "0.1.0"
