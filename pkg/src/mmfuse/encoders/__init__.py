"""Unimodal treatment: tweet/image-text encoding and the vision backbone."""

from .text import (
    HASHTAG,
    NUMBER,
    PAD,
    UNK,
    URL,
    USER,
    TextEncoder,
    TextEncoderConfig,
    Vocabulary,
    load_embeddings,
    preprocess_tweet_text,
)
from .vision import (
    ImagePreprocessConfig,
    VisionBackbone,
    VisionBackboneConfig,
    preprocess_image,
)

__all__ = [
    "HASHTAG",
    "NUMBER",
    "PAD",
    "UNK",
    "URL",
    "USER",
    "TextEncoder",
    "TextEncoderConfig",
    "Vocabulary",
    "load_embeddings",
    "preprocess_tweet_text",
    "ImagePreprocessConfig",
    "VisionBackbone",
    "VisionBackboneConfig",
    "preprocess_image",
]
