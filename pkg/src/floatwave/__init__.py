"""Linear oblique waves around a freely floating cylinder."""

__version__ = "0.1.0"
