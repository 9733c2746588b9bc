"""Composition-quality evaluation: rubric aggregation, judge harness, agreement.

Aggregation arithmetic: the four text dimensions sum to at most 20, the three
image dimensions to 15, preference to 5; each block is divided by its full
score and the overall result is the plain mean of the three sub-scores.
All internal arithmetic is 64-bit float; display rounding is half-to-even at
two decimals.
"""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import dataclass

from .backends import GenerateRequest
from .errors import XComposeError
from .model import (
    AggregatedScore,
    Article,
    IMAGE_DIMENSIONS,
    RUBRIC_DIMENSIONS,
    RubricScore,
    TEXT_DIMENSIONS,
    VALID_LEVELS,
)
from .templates import PromptDocument, PromptTask, load_dimension_specs, load_template


class EvaluationError(XComposeError):
    pass


class InvalidLevel(EvaluationError):
    def __init__(self, dimension, value=None):
        self.dimension = dimension
        super().__init__(f"dimension {dimension}: value {value} not in {VALID_LEVELS}")


class OutOfRange(EvaluationError):
    pass


class EmptyInput(EvaluationError):
    pass


class MixedRaterKinds(EvaluationError):
    pass


class UnresolvedSlots(EvaluationError):
    pass


class MissingQuestion(EvaluationError):
    def __init__(self, question: int):
        self.question = question
        super().__init__(f"Q{question} absent from the Final Score block")


class NoFinalScoreBlock(EvaluationError):
    pass


class AllRunsInvalid(EvaluationError):
    pass


def aggregate_rubric(score: RubricScore) -> AggregatedScore:
    """Fold the eight dimension levels into text/image/preference/overall scores."""
    for name in RUBRIC_DIMENSIONS:
        value = getattr(score, name)
        if value not in VALID_LEVELS:
            raise InvalidLevel(name, value)
    text = sum(getattr(score, d) for d in TEXT_DIMENSIONS) / 20.0
    image = sum(getattr(score, d) for d in IMAGE_DIMENSIONS) / 15.0
    pref = score.subjective_preference / 5.0
    return AggregatedScore(text, image, pref, (text + image + pref) / 3.0)


def overall_from_subscores(pref: float, text: float, image: float) -> float:
    """Arithmetic mean of the three sub-scores."""
    for value in (pref, text, image):
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(f"sub-score {value} outside [0, 1]")
    return (pref + text + image) / 3.0


def round2(value: float) -> float:
    """Display rounding: half-to-even at two decimals."""
    return float(round(value, 2))


class RaterKind(enum.Enum):
    HUMAN = "human"
    MODEL_JUDGE = "model_judge"


@dataclass(frozen=True)
class EvaluationReport:
    article_id: str
    method_label: str  # blinded token during sessions
    rater_id: str
    rater_kind: RaterKind
    score: RubricScore
    aggregated: AggregatedScore

    @classmethod
    def build(cls, article_id, method_label, rater_id, rater_kind, score) -> "EvaluationReport":
        return cls(article_id, method_label, rater_id, rater_kind, score, aggregate_rubric(score))


def average_reports(reports) -> AggregatedScore:
    """Per-component mean of the aggregated scores of homogeneous reports."""
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to average")
    if len({r.rater_kind for r in reports}) > 1:
        raise MixedRaterKinds("cannot average across rater kinds")
    n = len(reports)
    return AggregatedScore(
        sum(r.aggregated.text_score for r in reports) / n,
        sum(r.aggregated.image_score for r in reports) / n,
        sum(r.aggregated.pref_score for r in reports) / n,
        sum(r.aggregated.overall for r in reports) / n,
    )


def format_dimension_block(spec: dict) -> str:
    """One question block: name, explanation, then the three scoring levels."""
    levels = spec["levels"]
    return (
        f"{spec['name']} {spec['explanation']} Scoring Levels: "
        f"1 point: {levels['1']}; 3 points: {levels['3']}; 5 points: {levels['5']}."
    )


def render_article_content(article: Article) -> tuple[str, tuple[str, ...]]:
    """Reading-order text with <img k> markers; attachments are the selected ids."""
    attachments: list[str] = []
    lines: list[str] = []
    for paragraph in article.paragraphs:
        lines.append(paragraph.text)
        slot = article.slot_at(paragraph.index)
        if slot is not None:
            attachments.append(slot.selected)
            lines.append(f"<img {len(attachments)}>")
    return "\n".join(lines), tuple(attachments)


def render_gpt4v_prompt(instruction: str, article: Article, dimension_specs=None) -> PromptDocument:
    """Render the model-judge evaluation prompt for a fully resolved article."""
    if any(slot.selected is None for slot in article.slots):
        raise UnresolvedSlots("every slot must have a selected image")
    specs = tuple(dimension_specs) if dimension_specs is not None else load_dimension_specs()
    if len(specs) != 8:
        raise ValueError("exactly eight dimension specs required")
    content, attachments = render_article_content(article)
    text = load_template("gpt4v_eval").replace("{instruction}", instruction).replace("{article}", content)
    for i, spec in enumerate(specs, start=1):
        text = text.replace(f"{{q{i}}}", format_dimension_block(spec))
    return PromptDocument(PromptTask.GPT4V_EVAL, text, attachments)


_FINAL_SCORE_RE = re.compile(r"Final\s+Score\s*:", re.IGNORECASE)
_QUESTION_RE = re.compile(r"Q(\d)\s*:\s*(-?\d+)\s*point(?:s)?", re.IGNORECASE)


def parse_gpt4v_response(text: str) -> RubricScore:
    """Extract the eight Q-scores from a judge completion.

    Requires a Final Score block and all of Q1..Q8, each valued 1/3/5;
    whitespace, the case of "points" and the reason text are free-form.
    """
    block = _FINAL_SCORE_RE.search(text)
    if block is None:
        raise NoFinalScoreBlock("no Final Score block in judge output")
    found: dict[int, int] = {}
    for q, value in _QUESTION_RE.findall(text[block.end():]):
        found.setdefault(int(q), int(value))
    values = []
    for q in range(1, 9):
        if q not in found:
            raise MissingQuestion(q)
        if found[q] not in VALID_LEVELS:
            raise InvalidLevel(q, found[q])
        values.append(found[q])
    return RubricScore.from_values(values)


@dataclass
class AgreementInput:
    """Per-slot (method choice, human ground truth) id pairs."""

    pairs: list[tuple[str, str]]


def selection_agreement(inputs: AgreementInput) -> float:
    """100 x fraction of slots where the method choice equals the human pick."""
    pairs = list(inputs.pairs)
    if not pairs:
        raise EmptyInput("no choice pairs")
    matches = sum(1 for choice, truth in pairs if choice == truth)
    return 100.0 * matches / len(pairs)


@dataclass
class JudgeRun:
    run: int
    completion: str
    score: RubricScore | None
    aggregated: AggregatedScore | None
    valid: bool
    error: str | None = None


@dataclass
class JudgeOutcome:
    mean: AggregatedScore
    runs: list[JudgeRun]
    invalid_count: int


def run_judge(article: Article, instruction: str, judge, runs: int = 3,
              seed: int | None = None, max_tokens: int = 2048) -> JudgeOutcome:
    """Score an article ``runs`` times with the judge and average the valid runs.

    Run r uses seed+r; a run whose parse fails is retried once with seed
    seed+runs+r (disjoint from all primary seeds), then recorded invalid and
    excluded from the mean. All runs invalid raises AllRunsInvalid.
    """
    prompt = render_gpt4v_prompt(instruction, article)
    results: list[JudgeRun] = []
    for r in range(runs):
        run_result = None
        for attempt_seed in ((seed + r, seed + runs + r) if seed is not None else (None, None)):
            completion = judge.generate(GenerateRequest(
                prompt=prompt.text, image_refs=prompt.attachments,
                max_tokens=max_tokens, seed=attempt_seed,
            ))
            try:
                score = parse_gpt4v_response(completion)
            except EvaluationError as e:
                run_result = JudgeRun(r, completion, None, None, False, type(e).__name__)
                continue
            run_result = JudgeRun(r, completion, score, aggregate_rubric(score), True)
            break
        results.append(run_result)
    valid = [r for r in results if r.valid]
    if not valid:
        raise AllRunsInvalid(f"all {runs} judge runs failed to parse")
    n = len(valid)
    mean = AggregatedScore(
        sum(r.aggregated.text_score for r in valid) / n,
        sum(r.aggregated.image_score for r in valid) / n,
        sum(r.aggregated.pref_score for r in valid) / n,
        sum(r.aggregated.overall for r in valid) / n,
    )
    return JudgeOutcome(mean=mean, runs=results, invalid_count=len(results) - n)


CSV_HEADER = ["article", "method", "rater", *RUBRIC_DIMENSIONS,
              "text_score", "image_score", "pref_score", "overall"]


def reports_to_csv(reports) -> str:
    """One CSV row per report: identity columns, eight dims, four aggregates."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for report in reports:
        writer.writerow([
            report.article_id, report.method_label, report.rater_id,
            *report.score.as_tuple(),
            repr(report.aggregated.text_score), repr(report.aggregated.image_score),
            repr(report.aggregated.pref_score), repr(report.aggregated.overall),
        ])
    return out.getvalue()
