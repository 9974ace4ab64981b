"""In-situ characterization of error channels from error-correction syndrome data."""

__version__ = "0.1.0"
