"""Scene-text reading with generative glyph shape models and a structured word parser."""

__version__ = "0.1.0"
