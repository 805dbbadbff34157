"""Machine-learning pathloss prediction from geographic and topology features."""

__version__ = "0.1.0"
