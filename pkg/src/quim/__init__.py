"""QuIM: question-to-question inverted-index retrieval with grounded generation."""

__version__ = "0.1.0"
