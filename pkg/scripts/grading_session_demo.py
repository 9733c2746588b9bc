#!/usr/bin/env python3
"""Scripted double-blind grading session against a live grading API server.

Starts the server in a thread, creates a 2-rater session over two methods'
articles, drives both raters through every score and pick task, closes the
session, and prints the export (CSV, agreement, unsealed blinding).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import requests

from xcompose.backends import BackendSuite, DemoGenerator, EmbedRequest, StubEmbedder
from xcompose.model import article_to_obj
from xcompose.pipeline import PipelineConfig, SelectionMode, compose
from xcompose.repository import EmbeddingIndex
from xcompose.server import GradingApi, make_grading_handler, serve_in_thread

DIMS = {f"d{i}": level for i, level in enumerate((5, 3, 5, 3, 5, 3, 5, 3), start=1)}


def build_articles():
    embedder = StubEmbedder(16, salt=0)
    index = EmbeddingIndex(16)
    for i in range(24):
        uri = f"https://img.example/sess/{i}.jpg"
        index.ingest(uri, embedder.embed(EmbedRequest("image", uri)))
    backends = BackendSuite(generator=DemoGenerator(salt=0), embedder=embedder)
    out = {}
    for method, mode in (("ours", SelectionMode.MODEL_SELECT), ("top1", SelectionMode.TOP1_BASELINE)):
        article, _ = compose("Lantern festivals by the river", PipelineConfig(m=4, seed=5, selection_mode=mode),
                             backends, index)
        out[method] = article
    return out


def main():
    server, url = serve_in_thread(make_grading_handler(GradingApi()))
    articles = build_articles()
    items = [
        {"method": method, "article": article_to_obj(article),
         "image_uris": {s.selected: f"https://cdn.example/{s.selected}.jpg" for s in article.slots}}
        for method, article in articles.items()
    ]
    session = requests.post(f"{url}/api/sessions",
                            json={"items": items, "raters": 2, "seed": 7}).json()["session"]
    print(f"session {session} at {url}")

    for rater in (1, 2):
        while True:
            payload = requests.get(f"{url}/api/sessions/{session}/next",
                                   params={"rater": rater}).json()
            if payload.get("done"):
                break
            if payload["kind"] == "score":
                requests.post(f"{url}/api/sessions/{session}/scores",
                              json={"rater": rater, "item": payload["item"], "dims": DIMS})
            else:
                chosen = payload["candidates"][0]["id"]
                requests.post(f"{url}/api/sessions/{session}/picks",
                              json={"rater": rater, "slot": payload["slot"], "chosen_id": chosen})
        print(f"rater {rater} done")

    requests.post(f"{url}/api/sessions/{session}/close")
    export = requests.get(f"{url}/api/sessions/{session}/export").json()
    print("\n--- export.csv ---")
    print(export["csv"])
    print("agreement:", export["agreement"])
    print("blinding:", export["blinding"])
    server.shutdown()


if __name__ == "__main__":
    main()
