"""Online selection algorithms with predictions and their Monte-Carlo harness."""

__version__ = "0.1.0"
