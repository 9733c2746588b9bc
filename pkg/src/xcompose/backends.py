"""Wire-protocol clients for generation/embedding services, plus in-process stubs.

Protocol: HTTP/1.1, JSON bodies. ``POST {base}/v1/generate`` returns
``{"text": ...}``; ``POST {base}/v1/embed`` returns ``{"dim": D, "vector": [..]}``;
errors arrive as ``{"error": {"code", "message"}}`` with a matching status.
Clients never interpret model semantics — parsing completions is the
templates module's job.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import XComposeError

DEFAULT_MAX_INFLIGHT = 4


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    image_refs: tuple[str, ...] = ()
    max_tokens: int = 1024
    temperature: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "image_refs", tuple(self.image_refs))


@dataclass(frozen=True)
class EmbedRequest:
    kind: str  # "text" or "image"
    payload: str


class BackendError(XComposeError):
    pass


class Unreachable(BackendError):
    pass


class BadStatus(BackendError):
    def __init__(self, code: int, message: str = ""):
        self.code = code
        super().__init__(f"status {code}: {message}")


class Timeout(BackendError):
    pass


class ProtocolError(BackendError):
    pass


class DimensionDrift(BackendError):
    pass


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff: tuple[float, ...] = (1.0, 2.0, 4.0)

    def sleep(self, attempt: int):
        if attempt < len(self.backoff):
            time.sleep(self.backoff[attempt])


def _post_json(url, body, timeout, policy: RetryPolicy, retry_5xx: bool, token: str | None):
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    last_exc = None
    for attempt in range(policy.attempts):
        try:
            resp = requests.post(url, json=body, timeout=timeout, headers=headers)
        except requests.Timeout as e:
            # Read timeouts are not idempotent-safe to retry blindly.
            raise Timeout(f"{url}: {e}") from e
        except requests.ConnectionError as e:
            last_exc = e
            policy.sleep(attempt)
            continue
        if resp.status_code >= 500 and retry_5xx and attempt + 1 < policy.attempts:
            policy.sleep(attempt)
            continue
        if resp.status_code != 200:
            message = ""
            try:
                message = resp.json().get("error", {}).get("message", "")
            except Exception:
                pass
            raise BadStatus(resp.status_code, message)
        try:
            return resp.json()
        except ValueError as e:
            raise ProtocolError(f"{url}: response body is not JSON") from e
    raise Unreachable(f"{url} unreachable after {policy.attempts} attempts: {last_exc}")


class HttpGenerator:
    """Client for a remote text-generation service; shareable across threads."""

    def __init__(self, base_url: str, timeout: float = 120.0, policy: RetryPolicy | None = None,
                 token: str | None = None, max_inflight: int = DEFAULT_MAX_INFLIGHT):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.policy = policy or RetryPolicy()
        self.token = token
        self._inflight = threading.Semaphore(max_inflight)

    def generate(self, request: GenerateRequest) -> str:
        if not request.prompt:
            raise ValueError("prompt must be non-empty")
        body = {
            "prompt": request.prompt,
            "image_refs": list(request.image_refs),
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "seed": request.seed,
        }
        # 5xx retries are only idempotent-safe when the request is seeded.
        with self._inflight:
            obj = _post_json(f"{self.base_url}/v1/generate", body, self.timeout, self.policy,
                             retry_5xx=request.seed is not None, token=self.token)
        if not isinstance(obj, dict) or "text" not in obj or not isinstance(obj["text"], str):
            raise ProtocolError("generate response missing 'text' field")
        return obj["text"]


class HttpEmbedder:
    """Client for a remote embedding service advertising a fixed dimension."""

    def __init__(self, base_url: str, dimension: int, timeout: float = 30.0,
                 policy: RetryPolicy | None = None, token: str | None = None,
                 max_inflight: int = DEFAULT_MAX_INFLIGHT):
        self.base_url = base_url.rstrip("/")
        self.dimension = dimension
        self.timeout = timeout
        self.policy = policy or RetryPolicy()
        self.token = token
        self._inflight = threading.Semaphore(max_inflight)

    def embed(self, request: EmbedRequest) -> np.ndarray:
        if not request.payload:
            raise ValueError("payload must be non-empty")
        body = {"kind": request.kind, "payload": request.payload}
        with self._inflight:
            obj = _post_json(f"{self.base_url}/v1/embed", body, self.timeout, self.policy,
                             retry_5xx=True, token=self.token)
        if not isinstance(obj, dict) or "vector" not in obj or "dim" not in obj:
            raise ProtocolError("embed response missing 'dim'/'vector' fields")
        vector = np.asarray(obj["vector"], dtype=np.float64)
        if obj["dim"] != self.dimension or vector.shape != (self.dimension,):
            raise DimensionDrift(f"advertised {self.dimension}, backend returned {obj['dim']}")
        return vector


def _hash64(*parts: str) -> int:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def stub_embedding(payload: str, dimension: int, salt: int = 0) -> np.ndarray:
    """Deterministic unit vector for a payload.

    Algorithm (fixed, platform-stable, pinned by a golden test vector):
    SHA-256 of (payload, salt) -> 64-bit seed -> numpy PCG64 -> ziggurat
    standard normals of length ``dimension`` -> L2 normalization.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    seed = _hash64("stub-embed", str(salt), payload)
    rng = np.random.Generator(np.random.PCG64(seed))
    vec = rng.standard_normal(dimension)
    return vec / np.linalg.norm(vec)


class StubEmbedder:
    """In-process deterministic embedder for tests and offline runs."""

    def __init__(self, dimension: int, salt: int = 0):
        self.dimension = dimension
        self.salt = salt

    def embed(self, request: EmbedRequest) -> np.ndarray:
        if not request.payload:
            raise ValueError("payload must be non-empty")
        return stub_embedding(f"{request.kind}:{request.payload}", self.dimension, self.salt)


class StubGenerator:
    """Deterministic generator driven by a responder function."""

    def __init__(self, responder):
        self._responder = responder

    @classmethod
    def from_map(cls, by_substring: dict[str, str], default: str | None = None) -> "StubGenerator":
        def responder(request: GenerateRequest) -> str:
            for needle, reply in by_substring.items():
                if needle in request.prompt:
                    return reply
            if default is None:
                raise KeyError(f"no scripted reply matches prompt: {request.prompt[:80]!r}")
            return default

        return cls(responder)

    @classmethod
    def from_queue(cls, replies) -> "StubGenerator":
        queue = list(replies)

        def responder(request: GenerateRequest) -> str:
            if not queue:
                raise IndexError("scripted reply queue exhausted")
            return queue.pop(0)

        return cls(responder)

    def generate(self, request: GenerateRequest) -> str:
        if not request.prompt:
            raise ValueError("prompt must be non-empty")
        return self._responder(request)


_SEG_RE = re.compile(r"<seg (\d+)>")
_CAND_RE = re.compile(r"<cand (\d+)>")

_TOPIC_NOUNS = ("valley", "harbor", "garden", "market", "ridge", "temple", "river", "workshop")
_TOPIC_VERBS = ("reveals", "hosts", "frames", "shelters", "gathers", "echoes")


class DemoGenerator:
    """Scripted stand-in for a full model: answers every pipeline prompt kind.

    Purely a function of (prompt, seed, salt); all randomness is derived from
    SHA-256 so runs are reproducible across platforms.
    """

    def __init__(self, salt: int = 0):
        self.salt = salt

    def generate(self, request: GenerateRequest) -> str:
        if not request.prompt:
            raise ValueError("prompt must be non-empty")
        prompt = request.prompt
        if "Write an illustrated article based on the given instruction:" in prompt:
            return self._article_text(prompt, request.seed)
        if "select the appropriate locations for inserting images" in prompt:
            return self._spotting_reply(prompt)
        if "Candidate images include:" in prompt:
            return self._selection_reply(prompt, request.seed)
        if "Final Score:" in prompt:
            return self._judge_reply(prompt, request.seed)
        if "Reply with exactly one word" in prompt:
            return self._noise_reply(prompt)
        if "Reply with the title only" in prompt:
            return "Field notes " + str(_hash64("title", str(self.salt), prompt) % 1000)
        if "Reply with the outline only" in prompt:
            return "1. opening\n2. middle\n3. closing"
        if "Reply with the keywords only" in prompt:
            return "travel, light, texture"
        return "Understood."

    def _rng_int(self, *parts: str) -> int:
        return _hash64(str(self.salt), *parts)

    def _article_text(self, prompt: str, seed: int | None) -> str:
        instruction = prompt.split("given instruction:", 1)[1].split("<eou>")[0].strip()
        base = self._rng_int("article", str(seed), instruction)
        n = 3 + base % 2
        topic = re.sub(r"[^A-Za-z ]", "", instruction).strip().lower() or "the subject"
        paragraphs = []
        for i in range(n):
            noun = _TOPIC_NOUNS[(base + i) % len(_TOPIC_NOUNS)]
            verb = _TOPIC_VERBS[(base + 3 * i) % len(_TOPIC_VERBS)]
            paragraphs.append(
                f"Part {i + 1} on {topic}. The {noun} {verb} a quiet detail. "
                f"Notes continue with plain observations."
            )
        return "\n\n".join(paragraphs)

    def _spotting_reply(self, prompt: str) -> str:
        segments = {int(m.group(1)): m.end() for m in _SEG_RE.finditer(prompt)}
        n = max(segments) if segments else 1
        picks = sorted({min(2, n), n}) if n > 1 else [1]
        captions = []
        for idx in picks:
            start = segments[idx]
            tail = prompt[start:]
            cut = _SEG_RE.search(tail)
            text = tail[: cut.start()] if cut else tail.split(" Based on the above text", 1)[0]
            words = [w for w in re.findall(r"[A-Za-z]+", text) if len(w) > 2][:3]
            captions.append((idx, "a photo of " + " ".join(words).lower()))
        index_list = ", ".join(str(i) for i, _ in captions)
        caption_list = ", ".join(f"{i} paragraph: {c}" for i, c in captions)
        return (
            f"I think images can be added under the {index_list} paragraphs. "
            f"The image captions are as follows: {caption_list}"
        )

    def _selection_reply(self, prompt: str, seed: int | None) -> str:
        m = len(_CAND_RE.findall(prompt))
        choice = 1 + self._rng_int("select", str(seed), prompt) % max(m, 1)
        return f"The {choice} image."

    def _judge_reply(self, prompt: str, seed: int | None) -> str:
        base = self._rng_int("judge", str(seed), prompt)
        lines = ["Final Score:"]
        for q in range(1, 9):
            level = (1, 3, 5)[(base >> q) % 3]
            lines.append(f"Q{q}: {level} points, Reason: scripted verdict")
        return "\n".join(lines)

    def _noise_reply(self, prompt: str) -> str:
        sentence = prompt.split("Sentence:", 1)[-1].strip()
        roll = self._rng_int("noise", sentence) % 10
        return {0: "advertisement", 1: "reference"}.get(roll, "clean")


@dataclass
class BackendSuite:
    """The client bundle a pipeline run needs."""

    generator: object
    embedder: object
    judge: object = None

    @property
    def judge_or_generator(self):
        return self.judge if self.judge is not None else self.generator
