"""Library embeddings learned from import co-occurrence in source code."""

__version__ = "0.1.0"
