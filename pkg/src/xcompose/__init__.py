"""Interleaved image-text article composition and evaluation toolkit."""

from .model import (
    AggregatedScore,
    Article,
    ImageRecord,
    ImageSlot,
    Paragraph,
    RubricScore,
    deserialize_article,
    serialize_article,
    validate,
)
from .pipeline import CompositionTrace, PipelineConfig, SelectionMode, compose
from .repository import EmbeddingIndex

__all__ = [
    "AggregatedScore",
    "Article",
    "CompositionTrace",
    "EmbeddingIndex",
    "ImageRecord",
    "ImageSlot",
    "Paragraph",
    "PipelineConfig",
    "RubricScore",
    "SelectionMode",
    "compose",
    "deserialize_article",
    "serialize_article",
    "validate",
]
