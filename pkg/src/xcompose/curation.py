"""Web-corpus cleaning and training-sample construction.

Sentence-level noise labels come from a judge backend; an article is rejected
outright when more than 30% of its sentences are noisy. The boundary is
computed with integer arithmetic (10 * noisy <= 3 * total retains) so there
is no floating-point surprise at exactly 30%.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .backends import GenerateRequest
from .errors import XComposeError
from .model import Article, ImageSlot, Paragraph, split_sentence_spans
from .repository import EmbeddingIndex
from .templates import load_template


class SentenceLabel(enum.Enum):
    CLEAN = "clean"
    ADVERTISEMENT = "advertisement"
    REFERENCE = "reference"
    RECOMMENDATION = "recommendation"

    @property
    def noisy(self) -> bool:
        return self is not SentenceLabel.CLEAN


class CurationError(XComposeError):
    pass


class EmptyArticle(CurationError):
    pass


class LabelCountMismatch(CurationError):
    pass


class EmptyCompletion(CurationError):
    pass


class InsufficientNegatives(CurationError):
    pass


@dataclass
class ClassificationResult:
    labels: list[SentenceLabel]
    unparseable_count: int = 0  # judge outputs that defaulted to clean


def classify_sentences(article: Article, judge, max_tokens: int = 16) -> ClassificationResult:
    """Label every sentence of the article via the fixed noise-judge prompt.

    Judge output that is not one of the four labels defaults to clean and
    bumps the warning counter.
    """
    template = load_template("noise_judge")
    labels: list[SentenceLabel] = []
    warnings = 0
    total = 0
    for paragraph in article.paragraphs:
        for sentence in paragraph.sentences():
            total += 1
            prompt = template.replace("{sentence}", sentence.strip())
            reply = judge.generate(GenerateRequest(prompt=prompt, max_tokens=max_tokens)).strip().lower()
            word = reply.split()[0].strip(".,:;") if reply.split() else ""
            try:
                labels.append(SentenceLabel(word))
            except ValueError:
                labels.append(SentenceLabel.CLEAN)
                warnings += 1
    if total == 0:
        raise EmptyArticle("article has no sentences to classify")
    return ClassificationResult(labels=labels, unparseable_count=warnings)


@dataclass
class DroppedSlot:
    paragraph_index: int
    caption: str
    selected: str | None


@dataclass
class CurationVerdict:
    retained: bool
    noisy: int
    total: int
    cleaned: Article | None = None
    removed_sentences: int = 0
    dropped_slots: list[DroppedSlot] = field(default_factory=list)

    @property
    def fraction(self) -> float:
        return self.noisy / self.total if self.total else 0.0

    def report_row(self, article_id: str) -> dict:
        return {
            "article": article_id,
            "verdict": "retained" if self.retained else "rejected",
            "noisy": self.noisy,
            "total": self.total,
            "fraction": self.fraction,
            "removed_sentences": self.removed_sentences,
            "dropped_slots": [d.paragraph_index for d in self.dropped_slots],
        }


def filter_article(article: Article, labels) -> CurationVerdict:
    """Apply the >30% rejection rule, else strip noisy sentences.

    Paragraphs emptied by the removal are deleted together with any slot
    anchored to them; surviving paragraphs are reindexed 1..N and slot
    indices remapped.
    """
    labels = list(labels)
    sentence_counts = [len(p.sentences()) for p in article.paragraphs]
    total = sum(sentence_counts)
    if len(labels) != total:
        raise LabelCountMismatch(f"{len(labels)} labels for {total} sentences")
    noisy = sum(1 for lab in labels if lab.noisy)
    if 10 * noisy > 3 * total:
        return CurationVerdict(retained=False, noisy=noisy, total=total)

    cursor = 0
    kept_paragraphs: list[Paragraph] = []
    index_map: dict[int, int] = {}
    for paragraph, count in zip(article.paragraphs, sentence_counts):
        spans = split_sentence_spans(paragraph.text)
        kept = [paragraph.text[s:e] for (s, e), lab in zip(spans, labels[cursor:cursor + count]) if not lab.noisy]
        cursor += count
        text = "".join(kept).strip()
        if text:
            index_map[paragraph.index] = len(kept_paragraphs) + 1
            kept_paragraphs.append(Paragraph(index=len(kept_paragraphs) + 1, text=text))

    dropped: list[DroppedSlot] = []
    remapped: list[ImageSlot] = []
    for slot in article.slots:
        if slot.paragraph_index in index_map:
            remapped.append(ImageSlot(index_map[slot.paragraph_index], slot.caption,
                                      slot.candidates, slot.selected))
        else:
            dropped.append(DroppedSlot(slot.paragraph_index, slot.caption, slot.selected))

    cleaned = Article.create(article.id, article.instruction, kept_paragraphs, remapped)
    return CurationVerdict(retained=True, noisy=noisy, total=total, cleaned=cleaned,
                           removed_sentences=noisy, dropped_slots=dropped)


class InstructionStyle(enum.Enum):
    TITLE = "title"
    OUTLINE = "outline"
    KEYWORDS = "keywords"


def synthesize_instruction(article: Article, judge, style: InstructionStyle,
                           max_tokens: int = 128, seed: int | None = None) -> str:
    """Ask the judge backend for a writing instruction in the given style."""
    template = load_template(f"synthesize_{style.value}")
    body = "\n\n".join(p.text for p in article.paragraphs)
    prompt = template.replace("{article}", body)
    completion = judge.generate(GenerateRequest(prompt=prompt, max_tokens=max_tokens, seed=seed)).strip()
    if not completion:
        raise EmptyCompletion(f"judge returned an empty {style.value} instruction")
    return completion


@dataclass(frozen=True)
class SelectionSample:
    """One selection-training example: context, shuffled candidates, answer index."""

    context: Article
    ground_truth: str
    negatives: tuple[str, ...]
    shuffled_candidates: tuple[str, ...]
    answer_index: int  # 1-based position of ground_truth in shuffled_candidates


def build_selection_sample(article: Article, slot_index: int, index: EmbeddingIndex,
                           k_negatives: int, seed: int) -> SelectionSample:
    """Draw seeded random negatives for a slot and shuffle them with the truth.

    Negatives are sampled uniformly without replacement from the repository,
    excluding the ground truth; the candidate shuffle consumes the same seed
    stream, so the whole sample is deterministic per (inputs, seed).
    """
    slot = article.slots[slot_index]
    if slot.selected is None:
        raise CurationError(f"slot {slot_index} has no ground-truth image")
    eligible = [i for i in index.ids() if i != slot.selected]
    if len(eligible) < k_negatives:
        raise InsufficientNegatives(f"need {k_negatives} negatives, repository offers {len(eligible)}")
    rng = random.Random(seed)
    negatives = rng.sample(eligible, k_negatives)
    candidates = [slot.selected, *negatives]
    rng.shuffle(candidates)

    prefix = Article.create(
        article.id, article.instruction,
        article.paragraphs[:slot.paragraph_index],
        tuple(s for s in article.slots[:slot_index] if s.paragraph_index < slot.paragraph_index),
    )
    return SelectionSample(
        context=prefix,
        ground_truth=slot.selected,
        negatives=tuple(negatives),
        shuffled_candidates=tuple(candidates),
        answer_index=candidates.index(slot.selected) + 1,
    )
