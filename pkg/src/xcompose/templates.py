"""Prompt rendering and response parsing for the composition task formats.

Every renderer is a pure function over the versioned template resources in
``resources/templates/v1`` (tests pin the file hashes). Parsers are strict
about sentinel phrases and lenient about whitespace and trailing punctuation:
real model output drifts in spacing, but the sentinel carries the semantics.

Abstract image/segment placeholders take the literal ASCII surface forms
``<seg i>``, ``<img i>`` and ``<cand i>`` so stub backends and parsers agree
without a tokenizer.
"""

from __future__ import annotations

import enum
import json
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .errors import XComposeError
from .model import Article, ImageSlot

TEMPLATE_VERSION = "v1"
RESOURCE_DIR = Path(__file__).parent / "resources" / "templates" / TEMPLATE_VERSION

# Tokens that must never appear raw inside user-supplied content.
SPECIAL_TOKENS = ("<eou>", "<eob>", "<|User|>", "<|Bot|>", "<seg", "<img", "<cand")

_TOKEN_ALTERNATION = "|".join(re.escape(t) for t in SPECIAL_TOKENS)
_ESCAPE_RE = re.compile(f"({_TOKEN_ALTERNATION})")
_UNESCAPE_RE = re.compile(f"\\\\({_TOKEN_ALTERNATION})")


class PromptTask(enum.Enum):
    TEXT_GENERATION = "text_generation"
    SPOTTING_CAPTIONING = "spotting_captioning"
    SELECTION = "selection"
    SFT_SAMPLE = "sft_sample"
    GPT4V_EVAL = "gpt4v_eval"


@dataclass(frozen=True)
class PromptDocument:
    task: PromptTask
    text: str
    attachments: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attachments", tuple(self.attachments))


@dataclass(frozen=True)
class SpottingResult:
    """Ordered (paragraph_index, caption) placements, indices strictly increasing."""

    placements: tuple[tuple[int, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple((int(i), c) for i, c in self.placements))

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.placements)


class TemplateError(XComposeError):
    pass


class EmptyInstruction(TemplateError):
    pass


class EmptyArticle(TemplateError):
    pass


class EmptyField(TemplateError):
    pass


class EmptyList(TemplateError):
    pass


class NoCandidates(TemplateError):
    pass


class MalformedResponse(TemplateError):
    pass


class IndexOutOfRange(TemplateError):
    pass


class DuplicateIndex(TemplateError):
    pass


class CaptionMismatch(TemplateError):
    pass


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (RESOURCE_DIR / f"{name}.txt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_dimension_specs() -> tuple[dict, ...]:
    """The eight grading dimensions (key, name, explanation, level texts)."""
    specs = json.loads((RESOURCE_DIR / "dimensions.json").read_text(encoding="utf-8"))
    return tuple(specs)


def escape_user_text(text: str) -> str:
    """Prefix each special-token occurrence with a backslash (injective)."""
    return _ESCAPE_RE.sub(r"\\\1", text)


def unescape_user_text(text: str) -> str:
    """Strip exactly one backslash before each special-token occurrence."""
    return _UNESCAPE_RE.sub(r"\1", text)


def render_text_generation_prompt(instruction: str) -> PromptDocument:
    if not instruction.strip():
        raise EmptyInstruction("instruction must be non-empty")
    text = load_template("text_generation").replace("{instruction}", escape_user_text(instruction))
    return PromptDocument(PromptTask.TEXT_GENERATION, text)


def render_spotting_prompt(article: Article) -> PromptDocument:
    if not article.paragraphs:
        raise EmptyArticle("article has no paragraphs")
    body = "".join(f"<seg {p.index}>{escape_user_text(p.text)}" for p in article.paragraphs)
    text = load_template("spotting").replace("{body}", body)
    return PromptDocument(PromptTask.SPOTTING_CAPTIONING, text)


# Response shape: "I think images can be added under the 2, 5 paragraphs.
# The image captions are as follows: 2 paragraph: ..., 5 paragraph: ..."
_SPOTTING_LOCATIONS_RE = re.compile(
    r"I\s+think\s+images\s+can\s+be\s+added\s+under\s+the\s+(?P<indices>\d+(?:\s*,\s*\d+)*)\s+paragraphs?\s*\.",
    re.IGNORECASE,
)
_CAPTIONS_INTRO_RE = re.compile(r"The\s+image\s+captions\s+are\s+as\s+follows\s*:", re.IGNORECASE)
_CAPTION_ANCHOR_RE = re.compile(r"(\d+)\s+paragraph\s*:", re.IGNORECASE)


def _strip_caption(raw: str, is_last: bool) -> str:
    text = raw.strip()
    if not is_last and text.endswith(","):
        text = text[:-1].rstrip()
    if text.endswith("."):
        text = text[:-1].rstrip()
    return text


def parse_spotting_response(response: str, n_paragraphs: int) -> SpottingResult:
    """Extract image placements from a spotting/captioning completion.

    Raises MalformedResponse when a sentinel phrase is missing or the
    captions section cannot be parsed, DuplicateIndex on repeated indices,
    MalformedResponse on an unsorted index list, IndexOutOfRange for indices
    outside [1, n_paragraphs], and CaptionMismatch when the caption index set
    differs from the location index set.
    """
    loc = _SPOTTING_LOCATIONS_RE.search(response)
    if loc is None:
        raise MalformedResponse("location sentinel phrase not found")
    indices = [int(tok) for tok in re.split(r"\s*,\s*", loc.group("indices"))]
    if len(set(indices)) != len(indices):
        raise DuplicateIndex(f"repeated paragraph index in {indices}")
    if indices != sorted(indices):
        raise MalformedResponse(f"indices not in increasing order: {indices}")
    for i in indices:
        if not 1 <= i <= n_paragraphs:
            raise IndexOutOfRange(f"paragraph {i} outside [1, {n_paragraphs}]")

    intro = _CAPTIONS_INTRO_RE.search(response, loc.end())
    if intro is None:
        raise MalformedResponse("captions sentinel phrase not found")
    tail = response[intro.end():]
    anchors = list(_CAPTION_ANCHOR_RE.finditer(tail))
    if not anchors:
        raise MalformedResponse("no caption entries found")
    caption_indices = [int(a.group(1)) for a in anchors]
    if len(set(caption_indices)) != len(caption_indices) or set(caption_indices) != set(indices):
        raise CaptionMismatch(f"caption indices {caption_indices} do not match locations {indices}")

    captions: dict[int, str] = {}
    for pos, anchor in enumerate(anchors):
        end = anchors[pos + 1].start() if pos + 1 < len(anchors) else len(tail)
        caption = _strip_caption(tail[anchor.end():end], is_last=pos + 1 == len(anchors))
        caption = unescape_user_text(caption)
        if not caption:
            raise MalformedResponse(f"empty caption for paragraph {caption_indices[pos]}")
        captions[caption_indices[pos]] = caption

    return SpottingResult(tuple((i, captions[i]) for i in indices))


def render_selection_prompt(prefix: Article, slot: ImageSlot, candidates) -> PromptDocument:
    """Render the image-selection prompt for one slot.

    ``prefix`` must contain every paragraph up to the slot's paragraph and,
    as slots, every previously resolved image placement (strictly earlier
    paragraphs, ``selected`` set). Prior images appear as ``<img k>`` markers
    right after their paragraph; candidates as ``<cand 1>..<cand m>``.
    Attachments list prior-image ids then candidate ids, in marker order.
    """
    candidates = list(candidates)
    if not candidates:
        raise NoCandidates("candidate list is empty")
    j = slot.paragraph_index
    if len(prefix.paragraphs) < j:
        raise ValueError(f"prefix is missing paragraphs up to {j}")

    prior_ids: list[str] = []
    parts: list[str] = []
    for para in prefix.paragraphs[:j]:
        parts.append(escape_user_text(para.text))
        prior = prefix.slot_at(para.index)
        if prior is not None and para.index < j:
            if prior.selected is None:
                raise ValueError(f"prior slot at paragraph {para.index} is unresolved")
            prior_ids.append(prior.selected)
            parts.append(f"<img {len(prior_ids)}>")
    context = "".join(parts)
    cand_markers = "".join(f"<cand {k}>" for k in range(1, len(candidates) + 1))
    text = load_template("selection").replace("{context}", context).replace("{candidates}", cand_markers)
    return PromptDocument(PromptTask.SELECTION, text, tuple(prior_ids) + tuple(candidates))


_SELECTION_RE = re.compile(r"\bthe\s+(\S+)\s+image\b", re.IGNORECASE)
_CARDINAL_RE = re.compile(r"^(\d+)(?:st|nd|rd|th)?$", re.IGNORECASE)

_WORD_ORDINALS = {
    "first": 1,
    "second": 2,
    "third": 3,
    "fourth": 4,
    "fifth": 5,
    "sixth": 6,
    "seventh": 7,
    "eighth": 8,
    "ninth": 9,
    "tenth": 10,
}


def parse_selection_response(response: str, m: int) -> int:
    """Parse "The {selected index} image." into an index in [1, m].

    Accepts cardinals ("3"), suffixed digits ("3rd") and the word ordinals
    first..tenth. Missing sentinel or unrecognized token raises
    MalformedResponse; a parsed index outside [1, m] raises IndexOutOfRange.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    match = _SELECTION_RE.search(response)
    if match is None:
        raise MalformedResponse("selection sentinel phrase not found")
    token = match.group(1)
    digits = _CARDINAL_RE.match(token)
    if digits:
        index = int(digits.group(1))
    else:
        index = _WORD_ORDINALS.get(token.lower(), 0)
        if index == 0:
            raise MalformedResponse(f"unrecognized index token {token!r}")
    if not 1 <= index <= m:
        raise IndexOutOfRange(f"index {index} outside [1, {m}]")
    return index


def render_sft_sample(instruction: str, answer: str) -> PromptDocument:
    if not instruction.strip() or not answer.strip():
        raise EmptyField("instruction and answer must both be non-empty")
    text = (
        load_template("sft_sample")
        .replace("{instruction}", escape_user_text(instruction))
        .replace("{answer}", escape_user_text(answer))
    )
    return PromptDocument(PromptTask.SFT_SAMPLE, text)


def pack_multiround_vqa(qa_pairs, seed: int) -> PromptDocument:
    """Render QA pairs as one multi-round conversation in seeded shuffle order."""
    pairs = list(qa_pairs)
    if not pairs:
        raise EmptyList("need at least one question/answer pair")
    rng = random.Random(seed)
    rng.shuffle(pairs)
    rounds = []
    for question, answer in pairs:
        if not question.strip() or not answer.strip():
            raise EmptyField("questions and answers must be non-empty")
        rounds.append(
            f"<|User|>: {escape_user_text(question)} <eou>\n<|Bot|>: {escape_user_text(answer)} <eob>"
        )
    return PromptDocument(PromptTask.SFT_SAMPLE, "\n".join(rounds))


# Sentinels each task's rendered text must contain (PromptDocument invariant).
TASK_SENTINELS = {
    PromptTask.TEXT_GENERATION: ("<|User|>:", "Write an illustrated article based on the given instruction:", "<eou>", "<|Bot|>:"),
    PromptTask.SPOTTING_CAPTIONING: ("<|User|>:", "select the appropriate locations for inserting images", "<eou>", "<|Bot|>:"),
    PromptTask.SELECTION: ("<|User|>:", "Candidate images include:", "<eou>", "<|Bot|>:"),
    PromptTask.SFT_SAMPLE: ("<|User|>:", "<eou>", "<|Bot|>:", "<eob>"),
    PromptTask.GPT4V_EVAL: ("There is an interleaved text-image article", "Final Score:"),
}
