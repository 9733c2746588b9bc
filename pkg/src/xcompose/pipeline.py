"""Three-stage composition orchestrator: generate text, spot+caption, retrieve+select.

Selection runs strictly in paragraph order because each slot's prompt
conditions on the images already chosen for earlier slots. With seeded
backends a compose call is bit-reproducible: the trace records every prompt,
completion and retrieval score, and replays to the same article.
"""

from __future__ import annotations

import datetime
import enum
import hashlib
import json
import re
from dataclasses import dataclass, field

from . import templates
from .backends import BackendSuite, EmbedRequest, GenerateRequest
from .errors import XComposeError
from .model import Article, ImageSlot, Paragraph, validate
from .repository import EmbeddingIndex

TRACE_SCHEMA_VERSION = 1


class SelectionMode(enum.Enum):
    MODEL_SELECT = "model"
    TOP1_BASELINE = "top1"


@dataclass(frozen=True)
class PipelineConfig:
    m: int = 4
    max_tokens: int = 1024
    temperature: float = 0.0
    seed: int | None = None
    selection_mode: SelectionMode = SelectionMode.MODEL_SELECT
    parse_retries: int = 2  # re-generations after an unparseable completion
    allow_partial: bool = False
    allow_no_images: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")


class PipelineError(XComposeError):
    pass


class EmptyGeneration(PipelineError):
    pass


class SpottingFailed(PipelineError):
    pass


class SelectionFailed(PipelineError):
    pass


@dataclass
class TraceEvent:
    step: int
    stage: str
    data: dict
    ts: str | None = None


@dataclass
class CompositionTrace:
    """Ordered per-stage records of one compose call.

    ``ts`` is wall-clock RFC3339 for unseeded runs and null for seeded runs
    so that deterministic runs serialize byte-identically.
    """

    events: list[TraceEvent] = field(default_factory=list)
    deterministic: bool = True

    def add(self, stage: str, **data) -> TraceEvent:
        ts = None if self.deterministic else datetime.datetime.now(datetime.timezone.utc).isoformat()
        event = TraceEvent(step=len(self.events), stage=stage, data=data, ts=ts)
        self.events.append(event)
        return event

    def to_jsonl(self) -> str:
        lines = []
        for e in self.events:
            lines.append(json.dumps(
                {"v": TRACE_SCHEMA_VERSION, "step": e.step, "stage": e.stage, "data": e.data, "ts": e.ts},
                ensure_ascii=False,
            ))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "CompositionTrace":
        trace = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            trace.events.append(TraceEvent(step=obj["step"], stage=obj["stage"], data=obj["data"], ts=obj["ts"]))
        return trace

    def stage_events(self, stage: str) -> list[TraceEvent]:
        return [e for e in self.events if e.stage == stage]


def split_paragraphs(generated: str) -> list[Paragraph]:
    """Split generated text on blank lines into 1-indexed paragraphs."""
    if not generated:
        raise EmptyGeneration("generation produced no text")
    chunks = [c.strip() for c in re.split(r"\n\s*\n", generated)]
    chunks = [c for c in chunks if c]
    if not chunks:
        raise EmptyGeneration("generation produced no non-empty paragraphs")
    return [Paragraph(index=i, text=text) for i, text in enumerate(chunks, start=1)]


def _attempt_seed(base: int | None, attempt: int) -> int | None:
    return None if base is None else base + attempt


def _generate_with_parse_retries(backend, prompt_doc, parse, config, trace, stage: str, **context):
    """Call generate, re-generating with an incremented seed while parsing fails."""
    last_error = None
    for attempt in range(config.parse_retries + 1):
        request = GenerateRequest(
            prompt=prompt_doc.text,
            image_refs=prompt_doc.attachments,
            max_tokens=config.max_tokens,
            temperature=config.temperature,
            seed=_attempt_seed(config.seed, attempt),
        )
        completion = backend.generate(request)
        try:
            result = parse(completion)
        except templates.TemplateError as e:
            last_error = e
            trace.add(stage, attempt=attempt, prompt=prompt_doc.text, completion=completion,
                      parsed=False, error=type(e).__name__, **context)
            continue
        trace.add(stage, attempt=attempt, prompt=prompt_doc.text, completion=completion,
                  parsed=True, attachments=list(prompt_doc.attachments), **context)
        return result, completion
    return None, last_error


def select_image(prefix: Article, slot: ImageSlot, candidates, backends: BackendSuite,
                 config: PipelineConfig, trace: CompositionTrace | None = None) -> str:
    """Pick one candidate id for a slot, conditioning on prior text and images."""
    candidate_ids = [c for c, _ in candidates] if candidates and isinstance(candidates[0], tuple) else list(candidates)
    trace = trace if trace is not None else CompositionTrace()
    prompt_doc = templates.render_selection_prompt(prefix, slot, candidate_ids)
    m = len(candidate_ids)
    result, info = _generate_with_parse_retries(
        backends.generator, prompt_doc, lambda text: templates.parse_selection_response(text, m),
        config, trace, stage="selection", paragraph=slot.paragraph_index,
    )
    if result is None:
        raise SelectionFailed(f"slot at paragraph {slot.paragraph_index}: {info}")
    return candidate_ids[result - 1]


def compose(instruction: str, config: PipelineConfig, backends: BackendSuite,
            index: EmbeddingIndex) -> tuple[Article, CompositionTrace]:
    """Run the full composition pipeline and return the article plus its trace."""
    if not instruction.strip():
        raise templates.EmptyInstruction("instruction must be non-empty")
    trace = CompositionTrace(deterministic=config.seed is not None)
    article_id = "art-" + hashlib.sha256(f"{instruction}\x1f{config.seed}".encode("utf-8")).hexdigest()[:12]

    # Stage (a): text generation.
    gen_prompt = templates.render_text_generation_prompt(instruction)
    gen_request = GenerateRequest(prompt=gen_prompt.text, max_tokens=config.max_tokens,
                                  temperature=config.temperature, seed=config.seed)
    generated = backends.generator.generate(gen_request)
    paragraphs = split_paragraphs(generated)
    trace.add("generate", prompt=gen_prompt.text, completion=generated, n_paragraphs=len(paragraphs))
    draft = Article.create(article_id, instruction, paragraphs)

    # Stage (b): image spotting and captioning.
    spotting_prompt = templates.render_spotting_prompt(draft)
    spotting, info = _generate_with_parse_retries(
        backends.generator, spotting_prompt,
        lambda text: templates.parse_spotting_response(text, len(paragraphs)),
        config, trace, stage="spotting",
    )
    if spotting is None:
        if config.allow_no_images:
            trace.add("spotting_empty", reason=str(info))
            return Article.create(article_id, instruction, paragraphs), trace
        raise SpottingFailed(str(info))

    # Stage (c): per-slot retrieval then sequential selection.
    retrievals = []
    for para_index, caption in spotting.placements:
        vector = backends.embedder.embed(EmbedRequest(kind="text", payload=caption))
        ranked = index.top_m(vector, config.m)
        trace.add("retrieval", paragraph=para_index, caption=caption,
                  candidates=[{"id": i, "similarity": s} for i, s in ranked])
        retrievals.append((para_index, caption, ranked))

    resolved: list[ImageSlot] = []
    for para_index, caption, ranked in retrievals:
        candidate_ids = [i for i, _ in ranked]
        slot = ImageSlot(paragraph_index=para_index, caption=caption, candidates=tuple(candidate_ids))
        if config.selection_mode is SelectionMode.TOP1_BASELINE:
            chosen = candidate_ids[0]
            trace.add("selection", paragraph=para_index, mode="top1", chosen=chosen)
        else:
            prefix = Article.create(article_id, instruction, paragraphs[:para_index], tuple(resolved))
            try:
                chosen = select_image(prefix, slot, candidate_ids, backends, config, trace)
            except SelectionFailed:
                if not config.allow_partial:
                    raise
                trace.add("selection_failed", paragraph=para_index)
                resolved.append(slot)
                continue
        resolved.append(ImageSlot(para_index, caption, tuple(candidate_ids), chosen))

    article = Article.create(article_id, instruction, paragraphs, tuple(resolved))
    assert validate(article) == []
    trace.add("compose_done", article_id=article_id, slots=len(resolved))
    return article, trace


def replay_article_from_trace(trace: CompositionTrace, instruction: str) -> Article:
    """Rebuild the article from recorded completions via the real parsers.

    Demonstrates the trace invariant: replaying the verbatim completions
    yields the same article that compose returned.
    """
    gen_events = trace.stage_events("generate")
    if not gen_events:
        raise PipelineError("trace has no generation event")
    paragraphs = split_paragraphs(gen_events[0].data["completion"])
    done = trace.stage_events("compose_done")
    article_id = done[0].data["article_id"] if done else "art-replay"

    spotting = None
    for event in trace.stage_events("spotting"):
        if event.data.get("parsed"):
            spotting = templates.parse_spotting_response(event.data["completion"], len(paragraphs))
    if spotting is None:
        return Article.create(article_id, instruction, paragraphs)

    candidates_by_para = {e.data["paragraph"]: [c["id"] for c in e.data["candidates"]]
                          for e in trace.stage_events("retrieval")}
    captions = dict(spotting.placements)
    chosen_by_para: dict[int, str] = {}
    for event in trace.stage_events("selection"):
        data = event.data
        para = data["paragraph"]
        if data.get("mode") == "top1":
            chosen_by_para[para] = data["chosen"]
        elif data.get("parsed"):
            m = len(candidates_by_para[para])
            idx = templates.parse_selection_response(data["completion"], m)
            chosen_by_para[para] = candidates_by_para[para][idx - 1]

    slots = []
    for para_index in sorted(captions):
        cands = tuple(candidates_by_para[para_index])
        slots.append(ImageSlot(para_index, captions[para_index], cands, chosen_by_para.get(para_index)))
    return Article.create(article_id, instruction, paragraphs, tuple(slots))
