"""Domain types for interleaved image-text articles and their canonical JSON form.

An Article is an ordered list of 1-indexed paragraphs plus image slots, at
most one slot per paragraph. All types are immutable values; anything the
pipeline hands out has passed ``validate``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import XComposeError

SENTENCE_TERMINATORS = ".!?。！？"

VALID_LEVELS = (1, 3, 5)

RUBRIC_DIMENSIONS = (
    "instruction_following",
    "writing_quality",
    "logic",
    "factualness",
    "image_text_consistency",
    "image_informative",
    "image_consistency",
    "subjective_preference",
)

TEXT_DIMENSIONS = RUBRIC_DIMENSIONS[:4]
IMAGE_DIMENSIONS = RUBRIC_DIMENSIONS[4:7]


@dataclass(frozen=True)
class Violation:
    invariant: str
    location: str

    def describe(self) -> str:
        return f"{self.invariant} ({self.location})"


class InvariantViolation(XComposeError):
    """A validating constructor or deserializer received invalid structure."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(v.describe() for v in self.violations))


class ArticleFormatError(XComposeError):
    """An article document does not match the canonical JSON schema."""


def split_sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans partitioning ``text`` into sentences.

    A sentence ends at a terminator (``.!?`` or their fullwidth forms)
    followed by whitespace or end-of-text; the span absorbs the trailing
    whitespace run so that concatenating surviving spans after a removal
    preserves the original spacing. Text without a terminator is one sentence.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        if text[i] in SENTENCE_TERMINATORS and (i + 1 >= n or text[i + 1].isspace()):
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            spans.append((start, j))
            start = j
            i = j
        else:
            i += 1
    if start < n:
        spans.append((start, n))
    return spans


def sentence_byte_spans(text: str) -> list[tuple[int, int]]:
    """Sentence spans as offsets into the UTF-8 encoding of ``text``."""
    byte_at = [0]
    for ch in text:
        byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
    return [(byte_at[s], byte_at[e]) for s, e in split_sentence_spans(text)]


@dataclass(frozen=True)
class Paragraph:
    index: int
    text: str

    def sentence_spans(self) -> list[tuple[int, int]]:
        return sentence_byte_spans(self.text)

    def sentences(self) -> list[str]:
        return [self.text[s:e] for s, e in split_sentence_spans(self.text)]


@dataclass(frozen=True)
class ImageSlot:
    paragraph_index: int
    caption: str = ""
    candidates: tuple[str, ...] = ()
    selected: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))


@dataclass(frozen=True)
class Article:
    id: str
    instruction: str
    paragraphs: tuple[Paragraph, ...]
    slots: tuple[ImageSlot, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "paragraphs", tuple(self.paragraphs))
        object.__setattr__(self, "slots", tuple(self.slots))

    @classmethod
    def create(cls, id, instruction, paragraphs, slots=()) -> "Article":
        """Build an article, raising InvariantViolation unless it validates."""
        article = cls(id, instruction, tuple(paragraphs), tuple(slots))
        violations = validate(article)
        if violations:
            raise InvariantViolation(violations)
        return article

    def slot_at(self, paragraph_index: int) -> ImageSlot | None:
        for slot in self.slots:
            if slot.paragraph_index == paragraph_index:
                return slot
        return None

    def sentence_count(self) -> int:
        return sum(len(p.sentences()) for p in self.paragraphs)


def validate(article: Article) -> list[Violation]:
    """Check every Article invariant; empty list means the article is valid.

    An empty caption is only a violation once the slot carries retrieval
    candidates; a slot with just a ground-truth ``selected`` image (raw web
    data before captioning) stays valid.
    """
    out: list[Violation] = []
    n = len(article.paragraphs)
    if n == 0:
        out.append(Violation("empty article", "paragraphs"))
    for pos, para in enumerate(article.paragraphs, start=1):
        if para.index != pos:
            out.append(Violation("paragraph index mismatch", f"position {pos} has index {para.index}"))
    seen: set[int] = set()
    prev = 0
    for slot in article.slots:
        loc = f"slot at paragraph {slot.paragraph_index}"
        if not 1 <= slot.paragraph_index <= n:
            out.append(Violation("slot out of range", loc))
        if slot.paragraph_index in seen:
            out.append(Violation("duplicate slot paragraph", loc))
        elif slot.paragraph_index < prev:
            out.append(Violation("slots not in paragraph order", loc))
        seen.add(slot.paragraph_index)
        prev = max(prev, slot.paragraph_index)
        if slot.selected is not None and slot.selected not in slot.candidates:
            out.append(Violation("selected not among candidates", loc))
        if slot.candidates and not slot.caption:
            out.append(Violation("empty slot caption", loc))
    return out


def article_to_obj(article: Article) -> dict:
    return {
        "id": article.id,
        "instruction": article.instruction,
        "paragraphs": [{"index": p.index, "text": p.text} for p in article.paragraphs],
        "slots": [
            {
                "paragraph_index": s.paragraph_index,
                "caption": s.caption,
                "candidates": list(s.candidates),
                "selected": s.selected,
            }
            for s in article.slots
        ],
    }


def serialize_article(article: Article) -> bytes:
    """Canonical encoding: fixed key order, UTF-8, LF, 2-space indent, final newline."""
    return (json.dumps(article_to_obj(article), ensure_ascii=False, indent=2) + "\n").encode("utf-8")


_PARAGRAPH_KEYS = {"index", "text"}
_SLOT_KEYS = {"paragraph_index", "caption", "candidates", "selected"}
_ARTICLE_KEYS = {"id", "instruction", "paragraphs", "slots"}


def article_from_obj(obj) -> Article:
    if not isinstance(obj, dict) or set(obj) != _ARTICLE_KEYS:
        raise ArticleFormatError(f"expected keys {sorted(_ARTICLE_KEYS)}")
    paragraphs = []
    for p in obj["paragraphs"]:
        if not isinstance(p, dict) or set(p) != _PARAGRAPH_KEYS:
            raise ArticleFormatError("malformed paragraph entry")
        paragraphs.append(Paragraph(index=p["index"], text=p["text"]))
    slots = []
    for s in obj["slots"]:
        if not isinstance(s, dict) or set(s) != _SLOT_KEYS:
            raise ArticleFormatError("malformed slot entry")
        slots.append(
            ImageSlot(
                paragraph_index=s["paragraph_index"],
                caption=s["caption"],
                candidates=tuple(s["candidates"]),
                selected=s["selected"],
            )
        )
    return Article.create(obj["id"], obj["instruction"], paragraphs, slots)


def deserialize_article(data: bytes | str) -> Article:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as e:
        raise ArticleFormatError(f"not valid JSON: {e}") from e
    return article_from_obj(obj)


@dataclass(frozen=True)
class ImageRecord:
    """An image plus its unit-norm embedding, quantized to f32 precision."""

    id: str
    source_uri: str
    embedding: tuple[float, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        object.__setattr__(self, "metadata", dict(self.metadata))


@dataclass(frozen=True)
class RubricScore:
    """The eight graded dimensions, each scored 1, 3 or 5."""

    instruction_following: int
    writing_quality: int
    logic: int
    factualness: int
    image_text_consistency: int
    image_informative: int
    image_consistency: int
    subjective_preference: int

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, d) for d in RUBRIC_DIMENSIONS)

    @classmethod
    def from_values(cls, values) -> "RubricScore":
        values = tuple(values)
        if len(values) != 8:
            raise ValueError("expected exactly 8 dimension values")
        return cls(*values)


@dataclass(frozen=True)
class AggregatedScore:
    text_score: float
    image_score: float
    pref_score: float
    overall: float
