"""mmfuse: multimodal (tweet text + image + image text) hate-speech models."""

__version__ = "0.1.0"
