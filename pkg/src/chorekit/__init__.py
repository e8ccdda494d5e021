"""chorekit: motion tokenization, hybrid sequence generation and retrieval metrics."""

__version__ = "0.1.0"
