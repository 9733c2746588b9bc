"""Double-blind grading sessions backing the grading API.

Method identities are replaced by opaque tokens via a seeded permutation at
session creation; the token-to-method map stays sealed until the session is
closed. Rater-facing payloads never contain a method name before close.
"""

from __future__ import annotations

import random
import string
import threading
from dataclasses import dataclass, field

from .errors import XComposeError
from .evaluation import AgreementInput, EvaluationReport, RaterKind, reports_to_csv, selection_agreement
from .model import Article, RubricScore, VALID_LEVELS, article_to_obj
from .templates import load_dimension_specs


class SessionError(XComposeError):
    def __init__(self, code: str, message: str, status: int = 400):
        self.code = code
        self.status = status
        super().__init__(message)


@dataclass
class GradingItem:
    item_id: str
    method: str  # sealed; never leaves the server before close
    token: str
    article: Article
    image_uris: dict[str, str]


@dataclass
class PickItem:
    pick_id: str
    item_id: str
    paragraph_index: int
    candidates: tuple[str, ...]
    method_choice: str | None


DIM_KEYS = tuple(f"d{i}" for i in range(1, 9))


@dataclass
class GradingSession:
    session_id: str
    items: list[GradingItem]
    picks: list[PickItem]
    raters: int
    seed: int
    scores: dict = field(default_factory=dict)  # (rater, item_id) -> dims dict
    choices: dict = field(default_factory=dict)  # (rater, pick_id) -> chosen id
    closed: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def create(cls, session_id: str, entries, raters: int, seed: int) -> "GradingSession":
        """Build a session from (method, article, image_uris) entries."""
        if raters < 1:
            raise SessionError("bad_request", "rater count must be >= 1")
        entries = list(entries)
        if not entries:
            raise SessionError("bad_request", "session needs at least one article")
        methods = sorted({method for method, _, _ in entries})
        rng = random.Random(seed)
        letters = list(string.ascii_uppercase[: len(methods)])
        rng.shuffle(letters)
        token_of = {method: f"method-{letter}" for method, letter in zip(methods, letters)}

        items: list[GradingItem] = []
        picks: list[PickItem] = []
        for n, (method, article, image_uris) in enumerate(entries):
            item = GradingItem(f"g{n}", method, token_of[method], article, dict(image_uris))
            items.append(item)
            for slot in article.slots:
                if slot.candidates:
                    picks.append(PickItem(f"p{len(picks)}", item.item_id, slot.paragraph_index,
                                          tuple(slot.candidates), slot.selected))
        return cls(session_id, items, picks, raters, seed)

    # ------------------------------------------------------------------
    # Rater-facing payloads
    # ------------------------------------------------------------------

    def _rater_rng(self, rater: int, purpose: str) -> random.Random:
        return random.Random(f"{self.seed}:{purpose}:{rater}")

    def _check_rater(self, rater) -> int:
        if not isinstance(rater, int) or not 1 <= rater <= self.raters:
            raise SessionError("unknown_rater", f"rater must be in 1..{self.raters}")
        return rater

    def _item_order(self, rater: int) -> list[GradingItem]:
        order = list(self.items)
        self._rater_rng(rater, "items").shuffle(order)
        return order

    def _pick_order(self, rater: int) -> list[PickItem]:
        order = list(self.picks)
        self._rater_rng(rater, "picks").shuffle(order)
        return order

    def _item_payload(self, item: GradingItem) -> dict:
        article = item.article
        obj = article_to_obj(article)
        del obj["id"]
        return {
            "kind": "score",
            "item": item.item_id,
            "method_token": item.token,
            "instruction": article.instruction,
            "article": obj,
            "image_uris": {s.selected: item.image_uris.get(s.selected, "")
                           for s in article.slots if s.selected},
            # Human raters read the same criteria text the model judge gets.
            "dimensions": [dict(spec) for spec in load_dimension_specs()],
        }

    def _pick_payload(self, pick: PickItem, rater: int) -> dict:
        item = next(i for i in self.items if i.item_id == pick.item_id)
        article = item.article
        prefix = [{"index": p.index, "text": p.text} for p in article.paragraphs[: pick.paragraph_index]]
        shown = list(pick.candidates)
        self._rater_rng(rater, f"cand:{pick.pick_id}").shuffle(shown)
        return {
            "kind": "pick",
            "item": pick.item_id,
            "slot": pick.pick_id,
            "paragraph_index": pick.paragraph_index,
            "prefix": prefix,
            "candidates": [{"id": c, "uri": item.image_uris.get(c, "")} for c in shown],
        }

    def next_for(self, rater) -> dict:
        rater = self._check_rater(rater)
        if self.closed:
            raise SessionError("closed", "session is closed", status=409)
        for item in self._item_order(rater):
            if (rater, item.item_id) not in self.scores:
                return self._item_payload(item)
        for pick in self._pick_order(rater):
            if (rater, pick.pick_id) not in self.choices:
                return self._pick_payload(pick, rater)
        return {"done": True}

    # ------------------------------------------------------------------
    # Submissions
    # ------------------------------------------------------------------

    def submit_score(self, rater, item_id: str, dims: dict) -> None:
        rater = self._check_rater(rater)
        with self.lock:
            if self.closed:
                raise SessionError("closed", "session is closed", status=409)
            if not any(i.item_id == item_id for i in self.items):
                raise SessionError("unknown_item", f"no item {item_id}", status=404)
            if not isinstance(dims, dict) or set(dims) != set(DIM_KEYS):
                raise SessionError("bad_dims", "dims must contain exactly d1..d8")
            values = [dims[k] for k in DIM_KEYS]
            if any(v not in VALID_LEVELS for v in values):
                raise SessionError("bad_level", f"dimension values must be in {VALID_LEVELS}")
            if (rater, item_id) in self.scores:
                raise SessionError("duplicate", "score already submitted", status=409)
            self.scores[(rater, item_id)] = dict(dims)

    def submit_pick(self, rater, pick_id: str, chosen_id: str) -> None:
        rater = self._check_rater(rater)
        with self.lock:
            if self.closed:
                raise SessionError("closed", "session is closed", status=409)
            pick = next((p for p in self.picks if p.pick_id == pick_id), None)
            if pick is None:
                raise SessionError("unknown_item", f"no pick task {pick_id}", status=404)
            if chosen_id not in pick.candidates:
                raise SessionError("bad_choice", "chosen id is not a candidate of this slot")
            if (rater, pick_id) in self.choices:
                raise SessionError("duplicate", "pick already submitted", status=409)
            self.choices[(rater, pick_id)] = chosen_id

    # ------------------------------------------------------------------
    # Close and export
    # ------------------------------------------------------------------

    def is_complete(self) -> bool:
        for rater in range(1, self.raters + 1):
            if any((rater, i.item_id) not in self.scores for i in self.items):
                return False
            if any((rater, p.pick_id) not in self.choices for p in self.picks):
                return False
        return True

    def close(self) -> None:
        with self.lock:
            if self.closed:
                raise SessionError("closed", "session already closed", status=409)
            if not self.is_complete():
                raise SessionError("incomplete", "every (rater, item) pair needs a score "
                                   "and every (rater, slot) pair a pick", status=409)
            self.closed = True

    def reports(self) -> list[EvaluationReport]:
        out = []
        for (rater, item_id), dims in sorted(self.scores.items()):
            item = next(i for i in self.items if i.item_id == item_id)
            score = RubricScore.from_values([dims[k] for k in DIM_KEYS])
            out.append(EvaluationReport.build(item.article.id, item.token, f"r{rater}",
                                              RaterKind.HUMAN, score))
        return out

    def export(self) -> dict:
        if not self.closed:
            raise SessionError("not_closed", "export is only available after close", status=409)
        agreement: dict[str, float] = {}
        method_pairs: dict[str, list[tuple[str, str]]] = {}
        top1_pairs: list[tuple[str, str]] = []
        for (rater, pick_id), chosen in sorted(self.choices.items()):
            pick = next(p for p in self.picks if p.pick_id == pick_id)
            item = next(i for i in self.items if i.item_id == pick.item_id)
            if pick.method_choice is not None:
                method_pairs.setdefault(item.method, []).append((pick.method_choice, chosen))
            top1_pairs.append((pick.candidates[0], chosen))
        for method, pairs in sorted(method_pairs.items()):
            agreement[method] = selection_agreement(AgreementInput(pairs))
        if top1_pairs:
            agreement["top1"] = selection_agreement(AgreementInput(top1_pairs))
        return {
            "session": self.session_id,
            "csv": reports_to_csv(self.reports()),
            "agreement": agreement,
            "blinding": {i.token: i.method for i in self.items},
        }
