#!/usr/bin/env python3
"""End-to-end composition demo against the deterministic stub backends.

Builds a small stub image index, composes one article in both selection
modes, and writes article.json + trace.jsonl for each into ./demo_out.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from xcompose.backends import BackendSuite, DemoGenerator, EmbedRequest, StubEmbedder
from xcompose.model import serialize_article
from xcompose.pipeline import PipelineConfig, SelectionMode, compose
from xcompose.repository import EmbeddingIndex

INSTRUCTION = "A field guide to harbor towns in winter"
SEED = 17
DIM = 32


def main():
    embedder = StubEmbedder(DIM, salt=0)
    index = EmbeddingIndex(DIM)
    for i in range(40):
        uri = f"https://img.example/demo/{i}.jpg"
        index.ingest(uri, embedder.embed(EmbedRequest("image", uri)))
    backends = BackendSuite(generator=DemoGenerator(salt=0), embedder=embedder)

    out_root = Path("demo_out")
    for mode in (SelectionMode.MODEL_SELECT, SelectionMode.TOP1_BASELINE):
        config = PipelineConfig(m=4, seed=SEED, selection_mode=mode)
        article, trace = compose(INSTRUCTION, config, backends, index)
        out = out_root / mode.value
        out.mkdir(parents=True, exist_ok=True)
        (out / "article.json").write_bytes(serialize_article(article))
        (out / "trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
        picks = [(s.paragraph_index, s.selected == s.candidates[0]) for s in article.slots]
        print(f"{mode.value}: {len(article.paragraphs)} paragraphs, "
              f"{len(article.slots)} slots, top1-agreement per slot: {picks}")
    print(f"outputs under {out_root}/")


if __name__ == "__main__":
    main()
